//! Deterministic synthetic experiments.
//!
//! Each `(model, prompt)` pair gets a random 2D response layout: one Gaussian
//! clump for easy prompts, two for moderate, three for confusing. The layout
//! is drawn once and rescaled by `dispersion[prompt_type] * temperature` for
//! every temperature, then placed in a random 2D affine subspace of
//! `R^embed_dim`. Because the DBSCAN radius also grows linearly with
//! temperature, a prompt's clustering is the same at every temperature and
//! its hull area grows with the square of the temperature.
//!
//! Randomness comes from ChaCha8 seeded with [`SynthConfig::seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{PromptType, ResponseRecord};
use crate::linalg::{dot, norm};

/// Clump standard deviation per unit of `dispersion * temperature`.
const CLUMP_SPREAD: f64 = 0.3;
/// Distance of clump centres from the layout origin, in the same units.
const CLUMP_RADIUS: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid synth config: {0}")]
pub struct SynthError(String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub easy: f64,
    pub moderate: f64,
    pub confusing: f64,
}

impl Default for Dispersion {
    fn default() -> Self {
        Self {
            easy: 0.3,
            moderate: 0.6,
            confusing: 1.5,
        }
    }
}

impl Dispersion {
    pub fn get(&self, t: PromptType) -> f64 {
        match t {
            PromptType::Easy => self.easy,
            PromptType::Moderate => self.moderate,
            PromptType::Confusing => self.confusing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub prompts_per_type: usize,
    pub responses_per_cell: usize,
    pub temperatures: Vec<f64>,
    pub embed_dim: usize,
    pub dispersion: Dispersion,
    pub models: Vec<String>,
    /// Permits fewer than 10 responses per cell, for exercising the size guard.
    pub allow_small_cells: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            prompts_per_type: 5,
            responses_per_cell: 20,
            temperatures: vec![0.25, 0.5, 0.75, 1.0],
            embed_dim: 16,
            dispersion: Dispersion::default(),
            models: vec!["synth-a".into(), "synth-b".into(), "synth-c".into()],
            allow_small_cells: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError(m.to_string()));
        if self.prompts_per_type == 0 {
            return fail("prompts_per_type must be positive");
        }
        if self.responses_per_cell == 0 {
            return fail("responses_per_cell must be positive");
        }
        if self.responses_per_cell < 10 && !self.allow_small_cells {
            return fail("responses_per_cell below 10 requires allow_small_cells");
        }
        if self.temperatures.is_empty()
            || self
                .temperatures
                .iter()
                .any(|t| !(t.is_finite() && *t > 0.0))
        {
            return fail("temperatures must be a non-empty list of positive values");
        }
        if self.embed_dim < 2 {
            return fail("embed_dim must be at least 2");
        }
        let d = &self.dispersion;
        if !(d.easy > 0.0
            && d.easy < d.moderate
            && d.moderate < d.confusing
            && d.confusing.is_finite())
        {
            return fail("dispersion must satisfy 0 < easy < moderate < confusing");
        }
        if self.models.is_empty() || self.models.iter().any(String::is_empty) {
            return fail("models must be a non-empty list of names");
        }
        let mut names = self.models.clone();
        names.sort();
        names.dedup();
        if names.len() != self.models.len() {
            return fail("model names must be unique");
        }
        Ok(())
    }

    /// Number of records [`generate`] produces.
    pub fn record_count(&self) -> usize {
        self.models.len()
            * PromptType::ALL.len()
            * self.prompts_per_type
            * self.temperatures.len()
            * self.responses_per_cell
    }
}

fn clump_count(t: PromptType) -> usize {
    match t {
        PromptType::Easy => 1,
        PromptType::Moderate => 2,
        PromptType::Confusing => 3,
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Two orthonormal vectors in `R^d` by Gram-Schmidt on Gaussian draws.
fn random_plane(rng: &mut ChaCha8Rng, d: usize) -> [Vec<f64>; 2] {
    loop {
        let mut u = gaussian_vector(rng, d);
        let mut v = gaussian_vector(rng, d);
        let nu = norm(&u);
        if nu < 1e-6 {
            continue;
        }
        u.iter_mut().for_each(|x| *x /= nu);
        let proj = dot(&u, &v);
        v.iter_mut().zip(&u).for_each(|(x, ui)| *x -= proj * ui);
        let nv = norm(&v);
        if nv < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        return [u, v];
    }
}

/// Unit-scale 2D layout: `n` points spread over `k` clumps.
fn layout(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<[f64; 2]> {
    let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let centers: Vec<[f64; 2]> = (0..k)
        .map(|j| {
            if k == 1 {
                [0.0, 0.0]
            } else {
                let a = phase + std::f64::consts::TAU * j as f64 / k as f64;
                [CLUMP_RADIUS * a.cos(), CLUMP_RADIUS * a.sin()]
            }
        })
        .collect();
    (0..n)
        .map(|i| {
            let c = centers[i % k];
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            [c[0] + CLUMP_SPREAD * zx, c[1] + CLUMP_SPREAD * zy]
        })
        .collect()
}

/// Generates the full synthetic grid with inline embeddings.
pub fn generate(config: &SynthConfig) -> Result<Vec<ResponseRecord>, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.embed_dim;
    let mut records = Vec::with_capacity(config.record_count());

    for model in &config.models {
        for prompt_type in PromptType::ALL {
            let scale = config.dispersion.get(prompt_type);
            for p in 0..config.prompts_per_type {
                let prompt_id = format!("{prompt_type}-{p:02}");
                let [u, v] = random_plane(&mut rng, d);
                let offset = gaussian_vector(&mut rng, d);
                let points = layout(
                    &mut rng,
                    config.responses_per_cell,
                    clump_count(prompt_type),
                );
                for &t in &config.temperatures {
                    let s = scale * t;
                    for (i, pt) in points.iter().enumerate() {
                        let (x, y) = (s * pt[0], s * pt[1]);
                        let embedding = (0..d).map(|k| offset[k] + x * u[k] + y * v[k]).collect();
                        records.push(ResponseRecord {
                            prompt_id: prompt_id.clone(),
                            prompt_type,
                            model_name: model.clone(),
                            temperature: t,
                            response_text: format!("{model} {prompt_id} t={t} response {i}"),
                            embedding: Some(embedding),
                        });
                    }
                }
            }
        }
    }
    Ok(records)
}
