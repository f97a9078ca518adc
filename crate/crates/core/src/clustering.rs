//! DBSCAN over projected 2D points.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label assigned to points that belong to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("non-positive temperature")]
    NonPositiveTemperature,
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("min_samples must be at least 1")]
    InvalidMinSamples,
}

/// Maps a sampling temperature to a DBSCAN radius as `base * t * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub base: f64,
    pub scale: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            base: 0.25,
            scale: 4.0,
        }
    }
}

impl EpsSchedule {
    pub fn eps(&self, temperature: f64) -> Result<f64, ClusterError> {
        eps_from_temperature(temperature, self.base, self.scale)
    }
}

pub fn eps_from_temperature(t: f64, base: f64, scale: f64) -> Result<f64, ClusterError> {
    if t.is_nan() || t <= 0.0 {
        return Err(ClusterError::NonPositiveTemperature);
    }
    Ok(base * t * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    eps: f64,
    min_samples: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_samples: usize) -> Result<Self, ClusterError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ClusterError::InvalidEps(eps));
        }
        if min_samples == 0 {
            return Err(ClusterError::InvalidMinSamples);
        }
        Ok(Self { eps, min_samples })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples
    }
}

/// Per-point cluster ids: `-1` is noise, clusters are numbered `0..k` in
/// discovery order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterLabels(Vec<i32>);

impl ClusterLabels {
    pub fn new(labels: Vec<i32>) -> Self {
        Self(labels)
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.0.iter().filter(|&&l| l == NOISE).count()
    }

    /// Distinct cluster labels, ascending, noise excluded.
    pub fn cluster_ids(&self) -> Vec<i32> {
        self.0
            .iter()
            .copied()
            .filter(|&l| l != NOISE)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Indices of the points carrying `label`.
    pub fn members(&self, label: i32) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    pub fn into_inner(self) -> Vec<i32> {
        self.0
    }
}

/// Number of distinct non-noise labels.
pub fn count_clusters(labels: &ClusterLabels) -> usize {
    let unique: BTreeSet<i32> = labels.0.iter().copied().collect();
    unique.len() - usize::from(unique.contains(&NOISE))
}

fn within(a: &[f64; 2], b: &[f64; 2], eps_sq: f64) -> bool {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy <= eps_sq
}

fn region_query(points: &[[f64; 2]], i: usize, eps_sq: f64) -> Vec<usize> {
    let p = &points[i];
    points
        .iter()
        .enumerate()
        .filter_map(|(j, q)| within(p, q, eps_sq).then_some(j))
        .collect()
}

/// Classic DBSCAN with a closed Euclidean ball that includes the query point.
///
/// Points are visited in ascending index order and each cluster is expanded
/// breadth-first to completion before the next seed is considered, so a
/// border point reachable from several clusters joins whichever was
/// discovered first.
pub fn dbscan(points: &[[f64; 2]], params: &DbscanParams) -> ClusterLabels {
    const UNVISITED: i32 = i32::MIN;

    let n = points.len();
    let eps_sq = params.eps * params.eps;
    let mut labels = vec![UNVISITED; n];
    let mut next_cluster = 0;

    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let neighbors = region_query(points, i, eps_sq);
        if neighbors.len() < params.min_samples {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = cluster;

        let mut queue: VecDeque<usize> = neighbors.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let expansion = region_query(points, j, eps_sq);
            if expansion.len() >= params.min_samples {
                queue.extend(
                    expansion
                        .into_iter()
                        .filter(|&k| labels[k] == UNVISITED || labels[k] == NOISE),
                );
            }
        }
    }
    ClusterLabels(labels)
}
