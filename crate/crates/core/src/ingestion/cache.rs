use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::IngestError;

/// 64-bit content hash of a response text: the first eight bytes of its SHA-256.
pub fn content_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Renders a content hash as 16 lowercase hex characters.
pub fn hash_hex(hash: u64) -> String {
    hex::encode(hash.to_be_bytes())
}

/// On-disk embedding memo: one `<hash>.json` file per response text holding
/// the raw vector as a JSON array.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| IngestError::Write {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, hash: u64) -> PathBuf {
        self.dir.join(format!("{}.json", hash_hex(hash)))
    }

    /// Unreadable or corrupt entries count as misses.
    pub fn get(&self, hash: u64) -> Option<Vec<f64>> {
        let bytes = fs::read(self.entry_path(hash)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Writes the entry to a temporary file in the cache directory and renames
    /// it into place, so readers never observe a partial entry.
    pub fn put(&self, hash: u64, vector: &[f64]) -> Result<(), IngestError> {
        let path = self.entry_path(hash);
        let write_err = |source: std::io::Error| IngestError::Write {
            path: path.clone(),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(write_err)?;
        serde_json::to_writer(&mut tmp, vector).map_err(|e| write_err(e.into()))?;
        tmp.flush().map_err(write_err)?;
        tmp.persist(&path).map_err(|e| write_err(e.error))?;
        Ok(())
    }
}
