use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: u64,
    pub seed: Seed,
    /// The score that admitted the seed; always > 0.
    pub weight: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("checkpoint total weight {stored} does not match entries ({actual})")]
    WeightMismatch { stored: f64, actual: f64 },
}

/// Seeds that produced a non-zero score, sampled in proportion to that score.
#[derive(Debug, Clone, Default)]
pub struct WeightedCorpus {
    entries: Vec<CorpusEntry>,
    cumulative: Vec<f64>,
    next_id: u64,
}

impl WeightedCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Draws an entry with probability `weight / total_weight`.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&CorpusEntry> {
        let total = self.total_weight();
        if self.entries.is_empty() {
            return None;
        }
        let r = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= r);
        self.entries.get(i.min(self.entries.len() - 1))
    }

    /// Admits `seed` if `dscore > 0`; returns the new entry's id.
    pub fn collect(&mut self, seed: Seed, dscore: f64) -> Option<u64> {
        if !dscore.is_finite() || dscore <= 0.0 {
            return None;
        }
        let id = self.next_id;
        self.push(CorpusEntry { id, seed, weight: dscore });
        Some(id)
    }

    fn push(&mut self, entry: CorpusEntry) {
        let total = self.total_weight() + entry.weight;
        self.next_id = self.next_id.max(entry.id + 1);
        self.cumulative.push(total);
        self.entries.push(entry);
    }

    /// Writes one JSON line per entry, replacing `path` atomically.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("jsonl.tmp");
        let mut out = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads a checkpoint. When `expected_total` is given the recomputed
    /// total weight must agree with it.
    pub fn load(path: &Path, seed_width: usize, expected_total: Option<f64>) -> Result<Self, CheckpointError> {
        let mut corpus = Self::new();
        let file = fs::File::open(path)?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let invalid = |reason: String| CheckpointError::Invalid { line: i + 1, reason };
            let entry: CorpusEntry = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
            if !(entry.weight > 0.0 && entry.weight <= 1.0) {
                return Err(invalid(format!("weight {} outside (0, 1]", entry.weight)));
            }
            if entry.seed.len() != seed_width {
                return Err(invalid(format!("seed of {} bytes, catalog needs {seed_width}", entry.seed.len())));
            }
            corpus.push(entry);
        }
        if let Some(stored) = expected_total {
            let actual = corpus.total_weight();
            if (stored - actual).abs() > 1e-9 * actual.max(1.0) {
                return Err(CheckpointError::WeightMismatch { stored, actual });
            }
        }
        Ok(corpus)
    }
}
