//! Group statistics over cell results and the report writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::ingestion::PromptType;
use crate::pipeline::{CellResult, Guard, HullStatus};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no results to aggregate")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Write {
        path: path.to_path_buf(),
        source,
    }
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor `n - 1`); 0 when `n <= 1`.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() <= 1 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Quantile of already sorted data, interpolating linearly between order
/// statistics at position `q * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);
    Summary {
        mean: mean(values),
        std: sample_std(values),
        median: quantile_sorted(&sorted, 0.5),
        q25,
        q75,
        iqr: q75 - q25,
    }
}

/// Area statistics for one `(model, prompt type, temperature)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "model")]
    pub model_name: String,
    pub prompt_type: PromptType,
    pub temperature: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub iqr: f64,
    pub n_cells: usize,
}

/// Clustering statistics for one `(model, prompt type)` group, pooled over
/// temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringRow {
    #[serde(rename = "model")]
    pub model_name: String,
    pub prompt_type: PromptType,
    pub num_clusters_mean: f64,
    pub num_clusters_std: f64,
    pub cluster_area_mean: f64,
    pub cluster_area_mean_std: f64,
    pub cluster_area_std_mean: f64,
    pub cluster_area_std_std: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct TempKey(String, PromptType, u64);

fn temp_order(t: f64) -> u64 {
    // Order-preserving map of an f64 to u64 (total order, matches total_cmp).
    let bits = t.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn aggregate_areas(results: &[CellResult]) -> Result<Vec<AggregateRow>, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut groups: BTreeMap<TempKey, (f64, Vec<f64>)> = BTreeMap::new();
    for r in results {
        let key = TempKey(
            r.key.model_name.clone(),
            r.prompt_type,
            temp_order(r.key.temperature),
        );
        groups
            .entry(key)
            .or_insert_with(|| (r.key.temperature, Vec::new()))
            .1
            .push(r.total_hull_area);
    }
    Ok(groups
        .into_iter()
        .map(
            |(TempKey(model_name, prompt_type, _), (temperature, areas))| {
                let s = summarize(&areas);
                AggregateRow {
                    model_name,
                    prompt_type,
                    temperature,
                    mean: s.mean,
                    std: s.std,
                    median: s.median,
                    iqr: s.iqr,
                    n_cells: areas.len(),
                }
            },
        )
        .collect())
}

/// Cluster count, mean cluster area and cluster-area std of one cell.
pub type CellStats = (f64, f64, f64);

/// Per-cell cluster statistics: count, mean cluster area, sample std of
/// cluster areas. Cells without clusters have mean 0; cells with at most one
/// cluster have std 0.
pub fn cell_cluster_stats(result: &CellResult) -> CellStats {
    let areas = result.cluster_areas();
    (result.num_clusters as f64, mean(&areas), sample_std(&areas))
}

pub fn aggregate_clustering(results: &[CellResult]) -> Result<Vec<ClusteringRow>, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut groups: BTreeMap<(String, PromptType), Vec<CellStats>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.key.model_name.clone(), r.prompt_type))
            .or_default()
            .push(cell_cluster_stats(r));
    }
    Ok(groups
        .into_iter()
        .map(|((model_name, prompt_type), cells)| {
            let counts: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let means: Vec<f64> = cells.iter().map(|c| c.1).collect();
            let stds: Vec<f64> = cells.iter().map(|c| c.2).collect();
            ClusteringRow {
                model_name,
                prompt_type,
                num_clusters_mean: mean(&counts),
                num_clusters_std: sample_std(&counts),
                cluster_area_mean: mean(&means),
                cluster_area_mean_std: sample_std(&means),
                cluster_area_std_mean: mean(&stds),
                cluster_area_std_std: sample_std(&stds),
                n_cells: cells.len(),
            }
        })
        .collect())
}

/// Fixed 4-decimal rendering used in CSV reports.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// A row that can be written as CSV.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRow for AggregateRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "prompt_type",
            "temperature",
            "n_cells",
            "mean",
            "std",
            "median",
            "iqr",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model_name.clone(),
            self.prompt_type.to_string(),
            self.temperature.to_string(),
            self.n_cells.to_string(),
            fmt4(self.mean),
            fmt4(self.std),
            fmt4(self.median),
            fmt4(self.iqr),
        ]
    }
}

impl CsvRow for ClusteringRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "prompt_type",
            "n_cells",
            "num_clusters_mean",
            "num_clusters_std",
            "cluster_area_mean",
            "cluster_area_mean_std",
            "cluster_area_std_mean",
            "cluster_area_std_std",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model_name.clone(),
            self.prompt_type.to_string(),
            self.n_cells.to_string(),
            fmt4(self.num_clusters_mean),
            fmt4(self.num_clusters_std),
            fmt4(self.cluster_area_mean),
            fmt4(self.cluster_area_mean_std),
            fmt4(self.cluster_area_std_mean),
            fmt4(self.cluster_area_std_std),
        ]
    }
}

/// Mean and standard deviation columns of an [`AggregateRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStdRow {
    pub model: String,
    pub prompt_type: PromptType,
    pub temperature: f64,
    pub n_cells: usize,
    pub mean: f64,
    pub std: f64,
}

/// Median and interquartile-range columns of an [`AggregateRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianIqrRow {
    pub model: String,
    pub prompt_type: PromptType,
    pub temperature: f64,
    pub n_cells: usize,
    pub median: f64,
    pub iqr: f64,
}

impl From<&AggregateRow> for MeanStdRow {
    fn from(r: &AggregateRow) -> Self {
        Self {
            model: r.model_name.clone(),
            prompt_type: r.prompt_type,
            temperature: r.temperature,
            n_cells: r.n_cells,
            mean: r.mean,
            std: r.std,
        }
    }
}

impl From<&AggregateRow> for MedianIqrRow {
    fn from(r: &AggregateRow) -> Self {
        Self {
            model: r.model_name.clone(),
            prompt_type: r.prompt_type,
            temperature: r.temperature,
            n_cells: r.n_cells,
            median: r.median,
            iqr: r.iqr,
        }
    }
}

impl CsvRow for MeanStdRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "prompt_type",
            "temperature",
            "n_cells",
            "mean",
            "std",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.prompt_type.to_string(),
            self.temperature.to_string(),
            self.n_cells.to_string(),
            fmt4(self.mean),
            fmt4(self.std),
        ]
    }
}

impl CsvRow for MedianIqrRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "prompt_type",
            "temperature",
            "n_cells",
            "median",
            "iqr",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.prompt_type.to_string(),
            self.temperature.to_string(),
            self.n_cells.to_string(),
            fmt4(self.median),
            fmt4(self.iqr),
        ]
    }
}

/// Per-cell line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub prompt_id: String,
    pub prompt_type: PromptType,
    pub model: String,
    pub temperature: f64,
    pub n_responses: usize,
    pub status: String,
    pub total_hull_area: Option<f64>,
    pub num_clusters: Option<usize>,
    pub noise_count: Option<usize>,
    pub note: String,
}

impl CsvRow for CellRow {
    fn header() -> &'static [&'static str] {
        &[
            "prompt_id",
            "prompt_type",
            "model",
            "temperature",
            "n_responses",
            "status",
            "total_hull_area",
            "num_clusters",
            "noise_count",
            "note",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.prompt_id.clone(),
            self.prompt_type.to_string(),
            self.model.clone(),
            self.temperature.to_string(),
            self.n_responses.to_string(),
            self.status.clone(),
            self.total_hull_area.map(fmt4).unwrap_or_default(),
            self.num_clusters.map(|v| v.to_string()).unwrap_or_default(),
            self.noise_count.map(|v| v.to_string()).unwrap_or_default(),
            self.note.clone(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// Pretty-printed JSON array at full precision.
    Structured,
}

/// Writes `rows` in the order given. Callers produce rows from the
/// aggregators, which already sort by model, prompt type and temperature.
pub fn emit_report<R: CsvRow + Serialize>(
    rows: &[R],
    format: ReportFormat,
    path: &Path,
) -> Result<(), ReportError> {
    let file = File::create(path).map_err(write_err(path))?;
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
            w.write_record(R::header())
                .map_err(|e| write_err(path)(to_io(e)))?;
            for row in rows {
                w.write_record(row.fields())
                    .map_err(|e| write_err(path)(to_io(e)))?;
            }
            w.flush().map_err(write_err(path))
        }
        ReportFormat::Structured => {
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| write_err(path)(e.into()))?;
            w.write_all(b"\n").map_err(write_err(path))?;
            w.flush().map_err(write_err(path))
        }
    }
}

/// Plot-ready geometry of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullDump {
    pub prompt_id: String,
    pub prompt_type: PromptType,
    pub model: String,
    pub temperature: f64,
    pub eps: Option<f64>,
    pub guarded: bool,
    pub guard: Option<Guard>,
    pub total_hull_area: f64,
    pub points: Vec<Point2>,
    pub labels: Vec<i32>,
    pub clusters: Vec<DumpedCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpedCluster {
    pub label: i32,
    pub point_count: usize,
    pub status: HullStatus,
    pub area: f64,
    /// Counter-clockwise vertex loop; empty when no hull was attempted and
    /// two endpoints for a collinear cluster.
    pub vertices: Vec<Point2>,
}

impl HullDump {
    pub fn from_result(result: &CellResult) -> Self {
        Self {
            prompt_id: result.key.prompt_id.clone(),
            prompt_type: result.prompt_type,
            model: result.key.model_name.clone(),
            temperature: result.key.temperature,
            eps: result.eps,
            guarded: result.guard.is_some(),
            guard: result.guard,
            total_hull_area: result.total_hull_area,
            points: result
                .projected
                .as_ref()
                .map(|p| p.points.clone())
                .unwrap_or_default(),
            labels: result
                .labels
                .as_ref()
                .map(|l| l.as_slice().to_vec())
                .unwrap_or_default(),
            clusters: result
                .clusters
                .iter()
                .map(|c| DumpedCluster {
                    label: c.label,
                    point_count: c.point_count,
                    status: c.status,
                    area: c.area,
                    vertices: c
                        .hull
                        .as_ref()
                        .map(|h| h.vertices.clone())
                        .unwrap_or_default(),
                })
                .collect(),
        }
    }
}

pub fn dump_hulls(result: &CellResult, path: &Path) -> Result<(), ReportError> {
    let dump = HullDump::from_result(result);
    let mut w = BufWriter::new(File::create(path).map_err(write_err(path))?);
    serde_json::to_writer_pretty(&mut w, &dump).map_err(|e| write_err(path)(e.into()))?;
    w.write_all(b"\n").map_err(write_err(path))?;
    w.flush().map_err(write_err(path))
}

/// File name for a cell's hull dump, safe on common filesystems.
pub fn dump_file_name(result: &CellResult) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect::<String>()
    };
    format!(
        "{}__{}__t{}.json",
        clean(&result.key.prompt_id),
        clean(&result.key.model_name),
        result.key.temperature
    )
}
