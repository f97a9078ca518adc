//! Geometric uncertainty scores for generated text.
//!
//! Responses to one prompt, from one model at one temperature, are embedded,
//! projected to 2D with PCA and clustered with DBSCAN; the summed convex-hull
//! area of the clusters is the cell's uncertainty score. Modules, bottom up:
//!
//! * [`linalg`]: matrices, covariance, Jacobi eigensolver, PCA
//! * [`clustering`]: DBSCAN and the temperature-to-radius schedule
//! * [`geometry`]: monotone-chain hulls and polygon areas
//! * [`ingestion`]: record files and embedding providers
//! * [`pipeline`]: per-cell scoring and the experiment grid
//! * [`report`]: group statistics, CSV/JSON reports, hull dumps
//! * [`synth`]: seeded synthetic experiments
//! * [`workflow`]: file-to-report runs used by the CLI

pub mod clustering;
pub mod geometry;
pub mod ingestion;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod workflow;

pub use clustering::{
    count_clusters, dbscan, eps_from_temperature, ClusterLabels, DbscanParams, EpsSchedule,
};
pub use geometry::{convex_hull, polygon_area, unique_rounded_count, HullPolygon};
pub use ingestion::{load_records, write_records, PromptType, ResponseRecord};
pub use linalg::{pca_project_2d, EmbeddingMatrix, ProjectedPoints};
pub use pipeline::{
    cell_uncertainty, run_experiment, AlgorithmConfig, AnalysisCell, CellKey, CellResult,
};
