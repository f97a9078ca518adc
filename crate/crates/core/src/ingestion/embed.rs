use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cache::{content_hash, EmbeddingCache};
use super::http::HttpEmbedder;
use super::{check_vector, IngestError, ResponseRecord};

/// One embedding per record, or the reason that record has none.
pub type PerRecord = Vec<Result<Vec<f64>, IngestError>>;
type Raw = Vec<Option<Vec<f64>>>;
type BatchSlot = Option<Result<Vec<Vec<f64>>, IngestError>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    /// Embeddings travel inside the record file.
    Inline,
    /// Embeddings come from a sidecar file of `{"response": .., "embedding": [..]}` lines.
    File,
    /// Embeddings come from an HTTP embedding service.
    Http,
}

impl fmt::Display for ProviderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderMode::Inline => "inline",
            ProviderMode::File => "file",
            ProviderMode::Http => "http",
        })
    }
}

impl FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inline" => Ok(ProviderMode::Inline),
            "file" => Ok(ProviderMode::File),
            "http" => Ok(ProviderMode::Http),
            other => Err(format!("unknown provider mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProviderConfig {
    pub mode: ProviderMode,
    pub endpoint_url: Option<String>,
    pub cache_path: Option<PathBuf>,
    pub sidecar_path: Option<PathBuf>,
    /// Texts per HTTP request.
    pub batch_size: usize,
    pub timeout: Duration,
    /// Concurrent HTTP requests.
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Inline,
            endpoint_url: None,
            cache_path: None,
            sidecar_path: None,
            batch_size: 32,
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
            max_retries: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.batch_size == 0 {
            return Err(IngestError::Config("batch_size must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(IngestError::Config("max_in_flight must be positive".into()));
        }
        match self.mode {
            ProviderMode::Http if self.endpoint_url.is_none() => Err(IngestError::Config(
                "http mode requires an endpoint url".into(),
            )),
            ProviderMode::File if self.sidecar_path.is_none() => Err(IngestError::Config(
                "file mode requires a sidecar embedding file".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchStats {
    /// HTTP requests issued, retries included.
    pub requests: u64,
    pub retries: u64,
    /// Records served from the on-disk cache.
    pub cache_hits: usize,
    /// Distinct texts fetched from the service.
    pub fetched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEmbeddings {
    /// One vector per input record, in input order.
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub stats: FetchStats,
}

/// Resolves an embedding for every record, failing on the first problem.
pub fn resolve_embeddings(
    records: &[ResponseRecord],
    cfg: &EmbeddingProviderConfig,
) -> Result<ResolvedEmbeddings, IngestError> {
    let (per_record, stats) = resolve_lenient(records, cfg)?;
    let vectors = per_record.into_iter().collect::<Result<Vec<_>, _>>()?;
    let dim = vectors.first().map_or(0, Vec::len);
    Ok(ResolvedEmbeddings {
        vectors,
        dim,
        stats,
    })
}

/// Resolves embeddings record by record.
///
/// Provider-level failures (bad config, unreachable service, unreadable
/// sidecar) fail the whole call. Per-record problems (missing or invalid
/// vector, dimension different from the first resolved record) are returned
/// in place so callers can isolate them.
pub fn resolve_lenient(
    records: &[ResponseRecord],
    cfg: &EmbeddingProviderConfig,
) -> Result<(PerRecord, FetchStats), IngestError> {
    cfg.validate()?;
    let (raw, stats) = match cfg.mode {
        ProviderMode::Inline => (
            records.iter().map(|r| r.embedding.clone()).collect(),
            FetchStats::default(),
        ),
        ProviderMode::File => (from_sidecar(records, cfg)?, FetchStats::default()),
        ProviderMode::Http => from_service(records, cfg)?,
    };

    let mut expected: Option<usize> = None;
    let resolved = records
        .iter()
        .zip(raw)
        .enumerate()
        .map(|(index, (record, vector))| {
            let vector = vector.ok_or_else(|| IngestError::MissingEmbedding {
                index,
                record: record.describe(),
            })?;
            check_vector(&vector).map_err(|reason| IngestError::InvalidEmbedding {
                index,
                record: record.describe(),
                reason,
            })?;
            let d = *expected.get_or_insert(vector.len());
            if vector.len() != d {
                return Err(IngestError::DimensionMismatch {
                    index,
                    record: record.describe(),
                    found: vector.len(),
                    expected: d,
                });
            }
            Ok(vector)
        })
        .collect();
    Ok((resolved, stats))
}

#[derive(Deserialize)]
struct SidecarLine {
    response: String,
    embedding: Vec<f64>,
}

fn from_sidecar(
    records: &[ResponseRecord],
    cfg: &EmbeddingProviderConfig,
) -> Result<Raw, IngestError> {
    let path = cfg.sidecar_path.as_ref().expect("validated");
    let file = File::open(path).map_err(|source| IngestError::Read {
        path: path.clone(),
        source,
    })?;
    let mut table: HashMap<u64, Vec<f64>> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IngestError::Read {
            path: path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SidecarLine = serde_json::from_str(&line).map_err(|e| IngestError::Sidecar {
            line: i + 1,
            reason: e.to_string(),
        })?;
        table.insert(content_hash(&entry.response), entry.embedding);
    }
    Ok(records
        .iter()
        .map(|r| table.get(&content_hash(&r.response_text)).cloned())
        .collect())
}

fn from_service(
    records: &[ResponseRecord],
    cfg: &EmbeddingProviderConfig,
) -> Result<(Raw, FetchStats), IngestError> {
    let endpoint = cfg.endpoint_url.as_deref().expect("validated");
    let cache = cfg
        .cache_path
        .as_ref()
        .map(EmbeddingCache::open)
        .transpose()?;
    let mut stats = FetchStats::default();

    let hashes: Vec<u64> = records
        .iter()
        .map(|r| content_hash(&r.response_text))
        .collect();
    let mut known: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut pending: Vec<(u64, String)> = Vec::new();
    let mut queued: HashSet<u64> = HashSet::new();
    for (record, &hash) in records.iter().zip(&hashes) {
        if known.contains_key(&hash) || queued.contains(&hash) {
            continue;
        }
        match cache.as_ref().and_then(|c| c.get(hash)) {
            Some(v) => {
                known.insert(hash, v);
            }
            None => {
                queued.insert(hash);
                pending.push((hash, record.response_text.clone()));
            }
        }
    }
    stats.cache_hits = records
        .iter()
        .zip(&hashes)
        .filter(|(_, h)| known.contains_key(h))
        .count();

    if !pending.is_empty() {
        let client = HttpEmbedder::new(endpoint, cfg.timeout, cfg.max_retries, cfg.backoff);
        let batches: Vec<&[(u64, String)]> = pending.chunks(cfg.batch_size).collect();
        let fetched = fetch_batches(&client, &batches, cfg.max_in_flight)?;
        for (batch, vectors) in batches.iter().zip(fetched) {
            for ((hash, _), vector) in batch.iter().zip(vectors) {
                if let Some(c) = &cache {
                    c.put(*hash, &vector)?;
                }
                known.insert(*hash, vector);
            }
        }
        stats.fetched = pending.len();
        stats.requests = client.requests();
        stats.retries = client.retries();
    }

    Ok((
        hashes.iter().map(|h| known.get(h).cloned()).collect(),
        stats,
    ))
}

/// Runs batches on up to `in_flight` worker threads. Results are returned in
/// batch order; if any batch fails, the lowest-indexed failure is reported.
fn fetch_batches(
    client: &HttpEmbedder,
    batches: &[&[(u64, String)]],
    in_flight: usize,
) -> Result<Vec<Vec<Vec<f64>>>, IngestError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<BatchSlot>> = Mutex::new((0..batches.len()).map(|_| None).collect());
    let workers = in_flight.min(batches.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
                let result = client.embed_batch(&texts);
                slots.lock().expect("worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|slot| slot.expect("every batch visited"))
        .collect()
}
