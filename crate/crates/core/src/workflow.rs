//! End-to-end runs: records file in, report directory out.
//!
//! `analyze` writes into the output directory:
//!
//! | file                  | contents                                          |
//! |-----------------------|---------------------------------------------------|
//! | `cells.csv`           | one line per cell: status, area, cluster counts   |
//! | `cells.json`          | full per-cell results, projections included       |
//! | `area_mean_std.csv`   | mean / std of cell areas per model, type, temp    |
//! | `area_median_iqr.csv` | median / IQR of cell areas per model, type, temp  |
//! | `clustering.csv`      | cluster count and area statistics per model, type |
//! | `area_stats.json`     | area statistics at full precision                 |
//! | `clustering.json`     | clustering statistics at full precision           |
//! | `rejects.json`        | input lines that failed to parse                  |
//! | `hulls/*.json`        | per-cell hull dumps, only with `dump_hulls`       |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ingestion::{
    load_records, EmbeddingProviderConfig, FetchStats, IngestError, Reject, ResponseRecord,
};
use crate::pipeline::{
    run_experiment, AlgorithmConfig, CellOutcome, ExperimentConfig, PipelineError,
};
use crate::report::{
    aggregate_areas, aggregate_clustering, dump_file_name, dump_hulls, emit_report, CellRow,
    MeanStdRow, MedianIqrRow, ReportError, ReportFormat,
};

pub const CELLS_CSV: &str = "cells.csv";
pub const CELLS_JSON: &str = "cells.json";
pub const AREA_MEAN_STD_CSV: &str = "area_mean_std.csv";
pub const AREA_MEDIAN_IQR_CSV: &str = "area_median_iqr.csv";
pub const CLUSTERING_CSV: &str = "clustering.csv";
pub const AREA_STATS_JSON: &str = "area_stats.json";
pub const CLUSTERING_JSON: &str = "clustering.json";
pub const REJECTS_JSON: &str = "rejects.json";
pub const HULLS_DIR: &str = "hulls";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cell not found: {0}")]
    CellNotFound(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub output_dir: PathBuf,
    pub provider: EmbeddingProviderConfig,
    pub algorithm: AlgorithmConfig,
    pub parallelism: usize,
    pub dump_hulls: bool,
}

impl RunConfig {
    pub fn new(input_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input_path: input_path.into(),
            output_dir: output_dir.into(),
            provider: EmbeddingProviderConfig::default(),
            algorithm: AlgorithmConfig::default(),
            parallelism: 1,
            dump_hulls: false,
        }
    }

    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            algorithm: self.algorithm,
            provider: self.provider.clone(),
            parallelism: self.parallelism,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub cells: usize,
    pub failed: Vec<(String, String)>,
    pub rejects: Vec<Reject>,
    pub fetch: FetchStats,
    pub files: Vec<PathBuf>,
}

impl AnalyzeSummary {
    pub fn all_computed(&self) -> bool {
        self.failed.is_empty()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> WorkflowError + '_ {
    move |source| WorkflowError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), WorkflowError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path)(e.into()))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(io_err(path))?;
    std::io::Write::flush(&mut w).map_err(io_err(path))
}

fn cell_row(outcome: &CellOutcome) -> CellRow {
    match outcome {
        CellOutcome::Computed(r) => CellRow {
            prompt_id: r.key.prompt_id.clone(),
            prompt_type: r.prompt_type,
            model: r.key.model_name.clone(),
            temperature: r.key.temperature,
            n_responses: r.n_responses,
            status: "computed".into(),
            total_hull_area: Some(r.total_hull_area),
            num_clusters: Some(r.num_clusters),
            noise_count: Some(r.noise_count),
            note: r
                .guard
                .map(|g| format!("guard: {}", g.as_str()))
                .unwrap_or_default(),
        },
        CellOutcome::Failed(f) => CellRow {
            prompt_id: f.key.prompt_id.clone(),
            prompt_type: f.prompt_type,
            model: f.key.model_name.clone(),
            temperature: f.key.temperature,
            n_responses: f.n_responses,
            status: "failed".into(),
            total_hull_area: None,
            num_clusters: None,
            noise_count: None,
            note: f.error.clone(),
        },
    }
}

/// Loads records, scores every cell and writes the report directory.
pub fn analyze(config: &RunConfig) -> Result<AnalyzeSummary, WorkflowError> {
    let loaded = load_records(&config.input_path)?;
    let outcome = run_experiment(&loaded.records, &config.experiment())?;

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = Vec::new();

    let rows: Vec<CellRow> = outcome.cells.iter().map(cell_row).collect();
    let path = out.join(CELLS_CSV);
    emit_report(&rows, ReportFormat::Csv, &path)?;
    files.push(path);
    let path = out.join(CELLS_JSON);
    write_json(&path, &outcome.cells)?;
    files.push(path);
    let path = out.join(REJECTS_JSON);
    write_json(&path, &loaded.rejects)?;
    files.push(path);

    let results = outcome.results();
    if !results.is_empty() {
        let areas = aggregate_areas(&results)?;
        let clustering = aggregate_clustering(&results)?;
        let mean_std: Vec<MeanStdRow> = areas.iter().map(MeanStdRow::from).collect();
        let median_iqr: Vec<MedianIqrRow> = areas.iter().map(MedianIqrRow::from).collect();

        for (name, written) in [
            (
                AREA_MEAN_STD_CSV,
                emit_report(&mean_std, ReportFormat::Csv, &out.join(AREA_MEAN_STD_CSV)),
            ),
            (
                AREA_MEDIAN_IQR_CSV,
                emit_report(
                    &median_iqr,
                    ReportFormat::Csv,
                    &out.join(AREA_MEDIAN_IQR_CSV),
                ),
            ),
            (
                CLUSTERING_CSV,
                emit_report(&clustering, ReportFormat::Csv, &out.join(CLUSTERING_CSV)),
            ),
            (
                AREA_STATS_JSON,
                emit_report(&areas, ReportFormat::Structured, &out.join(AREA_STATS_JSON)),
            ),
            (
                CLUSTERING_JSON,
                emit_report(
                    &clustering,
                    ReportFormat::Structured,
                    &out.join(CLUSTERING_JSON),
                ),
            ),
        ] {
            written?;
            files.push(out.join(name));
        }
    }

    if config.dump_hulls {
        let dir = out.join(HULLS_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for r in &results {
            let path = dir.join(dump_file_name(r));
            dump_hulls(r, &path)?;
            files.push(path);
        }
    }

    Ok(AnalyzeSummary {
        cells: outcome.cells.len(),
        failed: outcome
            .failures()
            .into_iter()
            .map(|f| (f.key.to_string(), f.error.clone()))
            .collect(),
        rejects: loaded.rejects,
        fetch: outcome.fetch,
        files,
    })
}

/// Scores the single cell matching `prompt_id`, `model` and `temperature`.
/// Writes its hull dump into the output directory when `dump_hulls` is set.
pub fn inspect_cell(
    config: &RunConfig,
    prompt_id: &str,
    model: &str,
    temperature: f64,
) -> Result<(CellOutcome, Option<PathBuf>), WorkflowError> {
    let loaded = load_records(&config.input_path)?;
    let matching: Vec<ResponseRecord> = loaded
        .records
        .into_iter()
        .filter(|r| {
            r.prompt_id == prompt_id
                && r.model_name == model
                && (r.temperature - temperature).abs() < 1e-9
        })
        .collect();
    if matching.is_empty() {
        return Err(WorkflowError::CellNotFound(format!(
            "{prompt_id}/{model}/t={temperature}"
        )));
    }
    let outcome = run_experiment(&matching, &config.experiment())?;
    let cell = outcome
        .cells
        .into_iter()
        .next()
        .expect("one key yields one cell");

    let mut dump = None;
    if config.dump_hulls {
        if let CellOutcome::Computed(r) = &cell {
            let out = &config.output_dir;
            fs::create_dir_all(out).map_err(io_err(out))?;
            let path = out.join(dump_file_name(r));
            dump_hulls(r, &path)?;
            dump = Some(path);
        }
    }
    Ok((cell, dump))
}
