//! Append-only NDJSON round store: one JSON record per line, one file ("bin")
//! per VM.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::HarnessError;
use crate::model::{Dataset, RoundResult, VmKey};

#[derive(Debug, Clone)]
pub struct RoundStore {
    path: PathBuf,
}

impl RoundStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, round: &RoundResult) -> Result<(), HarnessError> {
        let mut line = serde_json::to_vec(round).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        file.write_all(&line)?;
        file.flush()?;
        Ok(())
    }

    /// All rounds in append order. A missing file is an empty store; a record
    /// that does not parse or lacks its newline is corruption.
    pub fn load(&self) -> Result<Vec<RoundResult>, HarnessError> {
        let bytes = match fs::read(&self.path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut rounds = Vec::new();
        let mut offset = 0usize;
        while offset < bytes.len() {
            let Some(len) = bytes[offset..].iter().position(|b| *b == b'\n') else {
                return Err(HarnessError::StoreCorrupt {
                    offset: offset as u64,
                    reason: "truncated record".into(),
                });
            };
            let line = &bytes[offset..offset + len];
            let round = serde_json::from_slice(line).map_err(|e| HarnessError::StoreCorrupt {
                offset: offset as u64,
                reason: e.to_string(),
            })?;
            rounds.push(round);
            offset += len + 1;
        }
        Ok(rounds)
    }
}

/// Directory of per-VM stores. Appends from concurrent workers are
/// serialized through one lock.
#[derive(Debug)]
pub struct Bins {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl Bins {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn store_for(&self, vm: &VmKey) -> RoundStore {
        let name: String = vm
            .to_string()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        RoundStore::new(self.dir.join(format!("{name}.ndjson")))
    }

    pub fn append(&self, round: &RoundResult) -> Result<(), HarnessError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        self.store_for(&round.vm).append(round)
    }

    /// Every round of every bin, bins in file-name order.
    pub fn load_all(&self) -> Result<Vec<RoundResult>, HarnessError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            out.extend(RoundStore::new(p).load()?);
        }
        Ok(out)
    }
}

/// Measurements of every parsed trial, in store order.
pub fn export_dataset(rounds: &[RoundResult]) -> Dataset {
    Dataset::new(rounds.iter().flat_map(RoundResult::measurements).collect())
}
