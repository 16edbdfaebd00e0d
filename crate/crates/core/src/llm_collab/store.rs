//! Append-only pseudo-label store: newline-delimited JSON with a SHA-256
//! hash chain over the records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelRecord {
    pub window_id: String,
    pub prompt: String,
    /// Raw first answer from the model.
    pub response: String,
    /// Parsed category; `None` when the answer was rejected or the query
    /// failed. Only records with a label are used for fine-tuning.
    pub llm_label: Option<String>,
    pub local_label: String,
    pub local_confidence: f64,
    /// Stream time of the window start, seconds.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainedRecord {
    #[serde(flatten)]
    record: PseudoLabelRecord,
    prev_hash: String,
    hash: String,
}

fn chain_hash(prev: &str, record: &PseudoLabelRecord) -> Result<String> {
    let body = serde_json::to_vec(record)?;
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(&body);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<ChainedRecord>,
}

/// Writes are serialized by an internal lock; a file-backed store appends
/// one line per record and never rewrites earlier lines.
#[derive(Debug)]
pub struct PseudoLabelStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl PseudoLabelStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Opens (or creates) a store file and verifies its chain.
    pub fn open(path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: ChainedRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::invalid(format!("{} line {}: {e}", path.display(), n + 1)))?;
                records.push(r);
            }
        }
        verify_chain(&records)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner { records }),
        })
    }

    /// Appends and returns the record hash.
    pub fn append(&self, record: PseudoLabelRecord) -> Result<String> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let prev = inner.records.last().map_or(GENESIS.to_string(), |r| r.hash.clone());
        let hash = chain_hash(&prev, &record)?;
        let chained = ChainedRecord {
            record,
            prev_hash: prev,
            hash: hash.clone(),
        };
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_string(&chained)?;
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        inner.records.push(chained);
        Ok(hash)
    }

    pub fn records(&self) -> Vec<PseudoLabelRecord> {
        let inner = self.inner.lock().expect("store lock poisoned");
        inner.records.iter().map(|r| r.record.clone()).collect()
    }

    /// Records carrying an accepted label.
    pub fn labelled(&self) -> Vec<PseudoLabelRecord> {
        self.records().into_iter().filter(|r| r.llm_label.is_some()).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self) -> String {
        let inner = self.inner.lock().expect("store lock poisoned");
        inner.records.last().map_or(GENESIS.to_string(), |r| r.hash.clone())
    }

    pub fn verify(&self) -> Result<()> {
        verify_chain(&self.inner.lock().expect("store lock poisoned").records)
    }
}

fn verify_chain(records: &[ChainedRecord]) -> Result<()> {
    let mut prev = GENESIS.to_string();
    for (i, r) in records.iter().enumerate() {
        if r.prev_hash != prev || chain_hash(&prev, &r.record)? != r.hash {
            return Err(Error::invalid(format!("pseudo-label store chain broken at record {i}")));
        }
        prev = r.hash.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize) -> PseudoLabelRecord {
        PseudoLabelRecord {
            window_id: format!("w{i}"),
            prompt: "p".into(),
            response: "cooking".into(),
            llm_label: Some("cooking".into()),
            local_label: "cleaning".into(),
            local_confidence: 0.3,
            timestamp: i as f64,
        }
    }

    #[test]
    fn reopen_and_append_keeps_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.ndjson");
        let s = PseudoLabelStore::open(&path).unwrap();
        for i in 0..3 {
            s.append(rec(i)).unwrap();
        }
        let before = std::fs::read(&path).unwrap();
        let s = PseudoLabelStore::open(&path).unwrap();
        assert_eq!(s.len(), 3);
        s.append(rec(3)).unwrap();
        let after = std::fs::read(&path).unwrap();
        assert!(after.starts_with(&before));
        PseudoLabelStore::open(&path).unwrap().verify().unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.ndjson");
        let s = PseudoLabelStore::open(&path).unwrap();
        s.append(rec(0)).unwrap();
        s.append(rec(1)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("w0", "wX", 1);
        std::fs::write(&path, text).unwrap();
        assert!(PseudoLabelStore::open(&path).is_err());
        // Reordering breaks the chain too.
        let lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        std::fs::write(&path, format!("{}\n{}\n", lines[1], lines[0])).unwrap();
        assert!(PseudoLabelStore::open(&path).is_err());
    }
}
