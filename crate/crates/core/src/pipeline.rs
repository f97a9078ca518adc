//! Per-cell uncertainty scoring and the experiment grid runner.
//!
//! A cell is one `(prompt, model, temperature)` group of responses. Its score
//! is the summed convex-hull area of the DBSCAN clusters found in the 2D PCA
//! projection of the response embeddings, with three guards:
//!
//! * no responses scores 0;
//! * fewer than `min_points` responses scores 0 without clustering;
//! * a cluster with at most two distinct points (after rounding) adds nothing.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    count_clusters, dbscan, ClusterError, ClusterLabels, DbscanParams, EpsSchedule,
};
use crate::geometry::{convex_hull, unique_rounded_count, HullPolygon, Point2};
use crate::ingestion::{
    resolve_lenient, EmbeddingProviderConfig, FetchStats, IngestError, PromptType, ResponseRecord,
};
use crate::linalg::{pca_project_2d, EmbeddingMatrix, LinalgError, ProjectedPoints};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(
        "embedding/response mismatch: {embeddings} embedding row(s) for {responses} response(s)"
    )]
    Mismatch { embeddings: usize, responses: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("inconsistent cell: {0}")]
    InconsistentCell(String),
    #[error("empty experiment")]
    EmptyExperiment,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Identifies one analysis cell. Ordered by prompt, then model, then temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellKey {
    pub prompt_id: String,
    #[serde(rename = "model")]
    pub model_name: String,
    pub temperature: f64,
}

impl CellKey {
    pub fn of(record: &ResponseRecord) -> Self {
        Self {
            prompt_id: record.prompt_id.clone(),
            model_name: record.model_name.clone(),
            temperature: record.temperature,
        }
    }
}

impl PartialEq for CellKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CellKey {}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prompt_id
            .cmp(&other.prompt_id)
            .then_with(|| self.model_name.cmp(&other.model_name))
            .then_with(|| self.temperature.total_cmp(&other.temperature))
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/t={}",
            self.prompt_id, self.model_name, self.temperature
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisCell {
    pub key: CellKey,
    pub prompt_type: PromptType,
    pub responses: Vec<ResponseRecord>,
}

impl AnalysisCell {
    /// Builds a cell, checking every record shares one key and prompt type.
    pub fn new(
        key: CellKey,
        prompt_type: PromptType,
        responses: Vec<ResponseRecord>,
    ) -> Result<Self, PipelineError> {
        for r in &responses {
            if CellKey::of(r) != key {
                return Err(PipelineError::InconsistentCell(format!(
                    "record for {} does not belong to cell {key}",
                    CellKey::of(r)
                )));
            }
            if r.prompt_type != prompt_type {
                return Err(PipelineError::InconsistentCell(format!(
                    "cell {key} mixes prompt types {prompt_type} and {}",
                    r.prompt_type
                )));
            }
        }
        Ok(Self {
            key,
            prompt_type,
            responses,
        })
    }
}

/// Size and rounding guards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guards {
    /// Cells with fewer responses score 0 and are not clustered.
    pub min_points: usize,
    /// Decimal places used when counting a cluster's distinct points.
    pub round_decimals: u32,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            min_points: 10,
            round_decimals: 6,
        }
    }
}

/// Every knob of the scoring algorithm. `Default` is the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub eps: EpsSchedule,
    /// Fixed DBSCAN radius, bypassing the temperature schedule.
    pub eps_override: Option<f64>,
    pub min_samples: usize,
    pub guards: Guards,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            eps: EpsSchedule::default(),
            eps_override: None,
            min_samples: 3,
            guards: Guards::default(),
        }
    }
}

impl AlgorithmConfig {
    pub fn dbscan_params(&self, temperature: f64) -> Result<DbscanParams, ClusterError> {
        let eps = match self.eps_override {
            Some(eps) => eps,
            None => self.eps.eps(temperature)?,
        };
        DbscanParams::new(eps, self.min_samples)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.eps.base) || !positive(self.eps.scale) {
            return Err(PipelineError::Config(
                "eps base and scale must be positive".into(),
            ));
        }
        if let Some(eps) = self.eps_override {
            DbscanParams::new(eps, self.min_samples)?;
        }
        if self.min_samples == 0 || self.guards.min_points == 0 {
            return Err(PipelineError::Config(
                "min_samples and min_points must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    NoResponses,
    TooFewPoints,
}

impl Guard {
    pub fn as_str(&self) -> &'static str {
        match self {
            Guard::NoResponses => "no_responses",
            Guard::TooFewPoints => "too_few_points",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullStatus {
    /// A proper polygon contributed its area.
    Hull,
    /// Enough distinct points but all collinear; contributes 0.
    Degenerate,
    /// At most two distinct rounded points; no hull attempted.
    TooFewUnique,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: i32,
    pub point_count: usize,
    pub unique_points: usize,
    pub status: HullStatus,
    pub hull: Option<HullPolygon>,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub prompt_type: PromptType,
    pub n_responses: usize,
    pub total_hull_area: f64,
    pub num_clusters: usize,
    pub noise_count: usize,
    /// Ascending by label.
    pub clusters: Vec<ClusterSummary>,
    pub guard: Option<Guard>,
    pub eps: Option<f64>,
    pub projected: Option<ProjectedPoints>,
    pub labels: Option<ClusterLabels>,
}

impl CellResult {
    fn guarded(cell: &AnalysisCell, guard: Guard) -> Self {
        Self {
            key: cell.key.clone(),
            prompt_type: cell.prompt_type,
            n_responses: cell.responses.len(),
            total_hull_area: 0.0,
            num_clusters: 0,
            noise_count: 0,
            clusters: Vec::new(),
            guard: Some(guard),
            eps: None,
            projected: None,
            labels: None,
        }
    }

    /// Areas of every cluster, zero-area ones included.
    pub fn cluster_areas(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.area).collect()
    }
}

/// Scores one cell.
pub fn cell_uncertainty(
    cell: &AnalysisCell,
    embeddings: &EmbeddingMatrix,
    params: &DbscanParams,
    guards: &Guards,
) -> Result<CellResult, PipelineError> {
    let n = cell.responses.len();
    if embeddings.rows() != n {
        return Err(PipelineError::Mismatch {
            embeddings: embeddings.rows(),
            responses: n,
        });
    }
    if n == 0 {
        return Ok(CellResult::guarded(cell, Guard::NoResponses));
    }
    if n < guards.min_points || n < 2 {
        return Ok(CellResult::guarded(cell, Guard::TooFewPoints));
    }

    let projected = pca_project_2d(embeddings)?;
    let labels = dbscan(&projected.points, params);

    let mut clusters = Vec::new();
    for label in labels.cluster_ids() {
        let members: Vec<Point2> = labels
            .members(label)
            .into_iter()
            .map(|i| projected.points[i])
            .collect();
        let unique_points = unique_rounded_count(&members, guards.round_decimals);
        let (status, hull, area) = if unique_points > 2 {
            match convex_hull(&members) {
                Ok(h) if !h.degenerate => {
                    let area = h.area;
                    (HullStatus::Hull, Some(h), area)
                }
                Ok(h) => (HullStatus::Degenerate, Some(h), 0.0),
                Err(_) => (HullStatus::Degenerate, None, 0.0),
            }
        } else {
            (HullStatus::TooFewUnique, None, 0.0)
        };
        clusters.push(ClusterSummary {
            label,
            point_count: members.len(),
            unique_points,
            status,
            hull,
            area,
        });
    }

    let total_hull_area = clusters.iter().map(|c| c.area).sum();
    Ok(CellResult {
        key: cell.key.clone(),
        prompt_type: cell.prompt_type,
        n_responses: n,
        total_hull_area,
        num_clusters: count_clusters(&labels),
        noise_count: labels.noise_count(),
        clusters,
        guard: None,
        eps: Some(params.eps()),
        projected: Some(projected),
        labels: Some(labels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub key: CellKey,
    pub prompt_type: PromptType,
    pub n_responses: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Computed(CellResult),
    Failed(CellFailure),
}

impl CellOutcome {
    pub fn key(&self) -> &CellKey {
        match self {
            CellOutcome::Computed(r) => &r.key,
            CellOutcome::Failed(f) => &f.key,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmConfig,
    pub provider: EmbeddingProviderConfig,
    /// Worker threads for cell evaluation.
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmConfig::default(),
            provider: EmbeddingProviderConfig::default(),
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Sorted by cell key.
    pub cells: Vec<CellOutcome>,
    pub fetch: FetchStats,
}

impl ExperimentOutcome {
    pub fn results(&self) -> Vec<CellResult> {
        self.cells
            .iter()
            .filter_map(|c| match c {
                CellOutcome::Computed(r) => Some(r.clone()),
                CellOutcome::Failed(_) => None,
            })
            .collect()
    }

    pub fn failures(&self) -> Vec<&CellFailure> {
        self.cells
            .iter()
            .filter_map(|c| match c {
                CellOutcome::Failed(f) => Some(f),
                CellOutcome::Computed(_) => None,
            })
            .collect()
    }
}

struct PreparedCell {
    key: CellKey,
    prompt_type: PromptType,
    records: Vec<ResponseRecord>,
    vectors: Vec<Result<Vec<f64>, IngestError>>,
}

/// Groups records into cells, resolves their embeddings and scores every
/// cell. A failing cell is reported in place; it does not stop the run.
pub fn run_experiment(
    records: &[ResponseRecord],
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyExperiment);
    }
    config.algorithm.validate()?;
    if config.parallelism == 0 {
        return Err(PipelineError::Config("parallelism must be positive".into()));
    }

    let (vectors, fetch) = resolve_lenient(records, &config.provider)?;

    let mut grouped: BTreeMap<CellKey, PreparedCell> = BTreeMap::new();
    for (record, vector) in records.iter().zip(vectors) {
        let entry = grouped
            .entry(CellKey::of(record))
            .or_insert_with(|| PreparedCell {
                key: CellKey::of(record),
                prompt_type: record.prompt_type,
                records: Vec::new(),
                vectors: Vec::new(),
            });
        entry.records.push(record.clone());
        entry.vectors.push(vector);
    }
    let prepared: Vec<PreparedCell> = grouped.into_values().collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let cells = pool.install(|| {
        prepared
            .into_par_iter()
            .map(|p| score_prepared(p, &config.algorithm))
            .collect()
    });
    Ok(ExperimentOutcome { cells, fetch })
}

fn score_prepared(p: PreparedCell, algorithm: &AlgorithmConfig) -> CellOutcome {
    let key = p.key.clone();
    let prompt_type = p.prompt_type;
    let n_responses = p.records.len();
    let scored = (|| {
        let rows = p
            .vectors
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::InvalidEmbedding(e.to_string()))?;
        let matrix = EmbeddingMatrix::from_rows(&rows)
            .map_err(|e| PipelineError::InvalidEmbedding(e.to_string()))?;
        let cell = AnalysisCell::new(p.key, p.prompt_type, p.records)?;
        let params = algorithm.dbscan_params(cell.key.temperature)?;
        cell_uncertainty(&cell, &matrix, &params, &algorithm.guards)
    })();
    match scored {
        Ok(result) => CellOutcome::Computed(result),
        Err(e) => CellOutcome::Failed(CellFailure {
            key,
            prompt_type,
            n_responses,
            error: e.to_string(),
        }),
    }
}
