#![allow(clippy::needless_range_loop)]

mod common;

use std::io::Write;
use std::time::Duration;

use common::*;
use hull_uncertainty::ingestion::{
    content_hash, hash_hex, load_records, resolve_embeddings, write_records, EmbeddingCache,
    EmbeddingProviderConfig, IngestError, PromptType, ProviderMode,
};
use proptest::prelude::*;

fn http_config(
    url: &str,
    cache: &std::path::Path,
    batch_size: usize,
    in_flight: usize,
) -> EmbeddingProviderConfig {
    EmbeddingProviderConfig {
        mode: ProviderMode::Http,
        endpoint_url: Some(url.to_string()),
        cache_path: Some(cache.to_path_buf()),
        batch_size,
        max_in_flight: in_flight,
        backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(5),
        ..Default::default()
    }
}

fn texts(n: usize) -> Vec<hull_uncertainty::ResponseRecord> {
    (0..n)
        .map(|i| record("p", "m", 0.5, &format!("response number {i}"), None))
        .collect()
}

#[test]
fn partial_failure_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, r#"{{"prompt_id":"a","prompt_type":"easy","model":"m","temperature":0.5,"response":"x","extra":1}}"#).unwrap();
    writeln!(f, "{{not json").unwrap();
    writeln!(f).unwrap();
    writeln!(f, r#"{{"prompt_id":"b","prompt_type":"confusing","model":"m","temperature":1.0,"response":"y","embedding":[1,2]}}"#).unwrap();
    writeln!(
        f,
        r#"{{"prompt_id":"c","prompt_type":"hard","model":"m","temperature":1.0,"response":"z"}}"#
    )
    .unwrap();
    drop(f);
    let loaded = load_records(&path).unwrap();
    assert_eq!(loaded.records.len(), 2);
    assert_eq!(loaded.records[1].embedding, Some(vec![1.0, 2.0]));
    let lines: Vec<usize> = loaded.rejects.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![2, 5]);
}

#[test]
fn empty_file_has_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    std::fs::write(&path, "garbage\n").unwrap();
    assert_eq!(load_records(&path).unwrap_err().to_string(), "no records");
    assert!(load_records(&dir.path().join("absent.jsonl")).is_err());
}

#[test]
fn inline_dimensions_are_checked() {
    let mut records: Vec<_> = (0..4)
        .map(|i| {
            record(
                "p",
                "m",
                0.5,
                &format!("r{i}"),
                Some(vec![i as f64, 0.5, -1.0]),
            )
        })
        .collect();
    let ok = resolve_embeddings(&records, &EmbeddingProviderConfig::default()).unwrap();
    assert_eq!((ok.vectors.len(), ok.dim), (4, 3));

    records[2].embedding = Some(vec![1.0, 2.0, 3.0, 4.0]);
    let err = resolve_embeddings(&records, &EmbeddingProviderConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        IngestError::DimensionMismatch { index: 2, .. }
    ));
    assert!(err.to_string().starts_with("record 2 "), "{err}");

    records[2].embedding = None;
    let err = resolve_embeddings(&records, &EmbeddingProviderConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        IngestError::MissingEmbedding { index: 2, .. }
    ));
}

#[test]
fn sidecar_lookup_by_text() {
    let dir = tempfile::tempdir().unwrap();
    let side = dir.path().join("side.jsonl");
    let records = texts(5);
    let body: String = records
        .iter()
        .rev()
        .map(|r| {
            serde_json::json!({"response": r.response_text, "embedding": stub_vector(&r.response_text)}).to_string() + "\n"
        })
        .collect();
    std::fs::write(&side, body).unwrap();
    let cfg = EmbeddingProviderConfig {
        mode: ProviderMode::File,
        sidecar_path: Some(side),
        ..Default::default()
    };
    let got = resolve_embeddings(&records, &cfg).unwrap();
    for (r, v) in records.iter().zip(&got.vectors) {
        assert_eq!(v, &stub_vector(&r.response_text));
    }
    let no_sidecar = EmbeddingProviderConfig {
        mode: ProviderMode::File,
        ..Default::default()
    };
    assert!(resolve_embeddings(&records, &no_sidecar).is_err());
}

#[test]
fn http_batches_and_caches() {
    let server = StubServer::start(0);
    let cache = tempfile::tempdir().unwrap();
    let mut records = texts(23);
    // A repeated text is requested once.
    records.push(records[0].clone());
    let cfg = http_config(&server.url, cache.path(), 5, 3);

    let first = resolve_embeddings(&records, &cfg).unwrap();
    let mut sizes = server.batch_sizes();
    sizes.sort();
    assert_eq!(sizes, vec![3, 5, 5, 5, 5]);
    assert_eq!(first.stats.requests, 5);
    assert_eq!(first.stats.fetched, 23);
    assert_eq!(first.dim, 4);
    for (r, v) in records.iter().zip(&first.vectors) {
        assert_eq!(v, &stub_vector(&r.response_text));
    }

    let before = server.requests();
    let second = resolve_embeddings(&records, &cfg).unwrap();
    assert_eq!(server.requests(), before);
    assert_eq!(second.stats.requests, 0);
    assert_eq!(second.stats.cache_hits, records.len());
    // Cache hits are bit-identical to what the service returned.
    assert_eq!(second.vectors, first.vectors);

    let entry = cache.path().join(format!(
        "{}.json",
        hash_hex(content_hash(&records[3].response_text))
    ));
    assert!(entry.exists());
}

#[test]
fn http_retries_transient_failures() {
    let server = StubServer::start(3);
    let cache = tempfile::tempdir().unwrap();
    let cfg = http_config(&server.url, cache.path(), 8, 1);
    let got = resolve_embeddings(&texts(8), &cfg).unwrap();
    assert_eq!(got.stats.retries, 3);
    assert_eq!(got.stats.requests, 4);
    assert_eq!(server.requests(), 4);
}

#[test]
fn http_gives_up_after_three_retries() {
    let server = StubServer::start(100);
    let cache = tempfile::tempdir().unwrap();
    let cfg = http_config(&server.url, cache.path(), 8, 1);
    let err = resolve_embeddings(&texts(8), &cfg).unwrap_err();
    assert_eq!(server.requests(), 4);
    let msg = err.to_string();
    assert!(msg.contains("503") && msg.contains(&server.url), "{msg}");
}

#[test]
fn http_mode_needs_an_endpoint() {
    let cfg = EmbeddingProviderConfig {
        mode: ProviderMode::Http,
        ..Default::default()
    };
    assert!(matches!(
        resolve_embeddings(&texts(2), &cfg),
        Err(IngestError::Config(_))
    ));
}

#[test]
fn cache_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cache = EmbeddingCache::open(dir.path()).unwrap();
    let v = vec![0.1, 1.0 / 3.0, -2.5e-300, 1e300, std::f64::consts::PI];
    cache.put(42, &v).unwrap();
    assert_eq!(cache.get(42).unwrap(), v);
    assert!(cache.get(43).is_none());
    assert_eq!(hash_hex(0xabc), "0000000000000abc");
}

fn record_strategy() -> impl Strategy<Value = hull_uncertainty::ResponseRecord> {
    (
        "[a-z0-9-]{1,8}",
        0usize..3,
        "[a-z.]{1,6}",
        0.01f64..2.0,
        ".{0,40}",
        prop::option::of(prop::collection::vec(-1e6f64..1e6, 2..6)),
    )
        .prop_map(
            |(p, t, m, temp, text, emb)| hull_uncertainty::ResponseRecord {
                prompt_id: p,
                prompt_type: PromptType::ALL[t],
                model_name: m,
                temperature: temp,
                response_text: text,
                embedding: emb,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_is_identity(records in prop::collection::vec(record_strategy(), 1..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_records(&path, &records).unwrap();
        let loaded = load_records(&path).unwrap();
        prop_assert!(loaded.rejects.is_empty());
        prop_assert_eq!(loaded.records, records);
    }

    #[test]
    fn a_bad_line_never_disturbs_its_neighbours(records in prop::collection::vec(record_strategy(), 2..8), at in 0usize..8) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_records(&path, &records).unwrap();
        let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        let at = at.min(lines.len());
        lines.insert(at, "{\"prompt_id\": 5".into());
        std::fs::write(&path, lines.join("\n")).unwrap();
        let loaded = load_records(&path).unwrap();
        prop_assert_eq!(loaded.records, records);
        prop_assert_eq!(loaded.rejects.len(), 1);
        prop_assert_eq!(loaded.rejects[0].line, at + 1);
    }
}
