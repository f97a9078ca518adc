//! Response records on disk and the embedding-provider boundary.
//!
//! Record files are line-delimited JSON, one response per line:
//!
//! ```text
//! {"prompt_id":"p1","prompt_type":"easy","model":"m","temperature":0.5,"response":"...","embedding":[0.1,0.2]}
//! ```
//!
//! `embedding` is optional and unknown fields are ignored.

mod cache;
mod embed;
mod http;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{content_hash, hash_hex, EmbeddingCache};
pub use embed::{
    resolve_embeddings, resolve_lenient, EmbeddingProviderConfig, FetchStats, PerRecord,
    ProviderMode, ResolvedEmbeddings,
};
pub use http::{EmbedRequest, EmbedResponse, HttpEmbedder};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no records")]
    NoRecords,
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("record {index} ({record}): embedding has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        record: String,
        found: usize,
        expected: usize,
    },
    #[error("record {index} ({record}): missing embedding")]
    MissingEmbedding { index: usize, record: String },
    #[error("record {index} ({record}): invalid embedding: {reason}")]
    InvalidEmbedding {
        index: usize,
        record: String,
        reason: String,
    },
    #[error("embedding service {endpoint} failed after {attempts} attempt(s): {detail}")]
    Http {
        endpoint: String,
        attempts: u32,
        status: Option<u16>,
        detail: String,
    },
    #[error("malformed sidecar line {line}: {reason}")]
    Sidecar { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptType {
    Easy,
    Moderate,
    Confusing,
}

impl PromptType {
    pub const ALL: [PromptType; 3] = [
        PromptType::Easy,
        PromptType::Moderate,
        PromptType::Confusing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptType::Easy => "easy",
            PromptType::Moderate => "moderate",
            PromptType::Confusing => "confusing",
        }
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(PromptType::Easy),
            "moderate" => Ok(PromptType::Moderate),
            "confusing" => Ok(PromptType::Confusing),
            other => Err(format!("unknown prompt type {other:?}")),
        }
    }
}

/// One generated response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub prompt_type: PromptType,
    #[serde(rename = "model")]
    pub model_name: String,
    pub temperature: f64,
    #[serde(rename = "response")]
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl ResponseRecord {
    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.prompt_id.is_empty() {
            return Err("empty prompt_id".into());
        }
        if self.model_name.is_empty() {
            return Err("empty model".into());
        }
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(format!(
                "temperature must be in (0, 2], got {}",
                self.temperature
            ));
        }
        if let Some(e) = &self.embedding {
            check_vector(e)?;
        }
        Ok(())
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "prompt {} / model {} / t={}",
            self.prompt_id, self.model_name, self.temperature
        )
    }
}

pub(crate) fn check_vector(v: &[f64]) -> Result<(), String> {
    if v.len() < 2 {
        return Err(format!("length {} is below 2", v.len()));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(format!("non-finite entry at position {i}"));
    }
    Ok(())
}

/// A line that failed to parse or validate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRecords {
    pub records: Vec<ResponseRecord>,
    pub rejects: Vec<Reject>,
}

/// Parses record lines. Blank lines are skipped; anything else that does
/// not parse or validate becomes a [`Reject`].
pub fn parse_records<R: BufRead>(reader: R) -> std::io::Result<LoadedRecords> {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ResponseRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => rejects.push(Reject {
                line: i + 1,
                reason,
            }),
        }
    }
    Ok(LoadedRecords { records, rejects })
}

pub fn load_records(path: &Path) -> Result<LoadedRecords, IngestError> {
    let read_err = |source| IngestError::Read {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(read_err)?;
    let loaded = parse_records(BufReader::new(file)).map_err(read_err)?;
    if loaded.records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    Ok(loaded)
}

pub fn write_records(path: &Path, records: &[ResponseRecord]) -> Result<(), IngestError> {
    let write_err = |source| IngestError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(write_err)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| write_err(e.into()))?;
        out.write_all(b"\n").map_err(write_err)?;
    }
    out.flush().map_err(write_err)
}
