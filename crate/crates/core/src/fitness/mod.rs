//! Difference scoring and the per-program archive.
//!
//! A [`ProgramStore`] remembers every `.text` hash and function hash it has
//! accepted. Scoring a binary whose `.text` was already seen returns 0
//! immediately; anything new is scored under a [`Strategy`], written to
//! `<archive_root>/<program_id>/bin/<content_hash>`, and recorded in
//! `meta.jsonl`.

mod strategy;

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binary::{
    digest_with_text, fuzzy_difference, BinaryDigest, Compressor, ElfError, FuzzyDigest, Hash256, TextSection,
};

pub use strategy::{Strategy, UnknownStrategy};

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("Fh requires symbols")]
    FhRequiresSymbols,
    #[error("baseline missing")]
    BaselineMissing,
    #[error("baseline already registered")]
    BaselineExists,
    #[error("invalid program id {0:?}")]
    InvalidProgramId(String),
    #[error("archive is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Elf(#[from] ElfError),
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A parsed binary ready for scoring.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub bytes: Vec<u8>,
    pub digest: BinaryDigest,
    pub text: TextSection,
}

impl Candidate {
    pub fn from_elf(bytes: Vec<u8>) -> Result<Self, ElfError> {
        let (digest, text) = digest_with_text(&bytes)?;
        Ok(Self { bytes, digest, text })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResult {
    pub dscore: f64,
    pub unique: bool,
    pub stored_as: Option<PathBuf>,
}

impl ScoreResult {
    fn duplicate() -> Self {
        Self {
            dscore: 0.0,
            unique: false,
            stored_as: None,
        }
    }
}

/// One line of `meta.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub content_hash: Hash256,
    pub text_hash: Hash256,
    pub dscore: f64,
    pub strategy: String,
    pub flags: Vec<String>,
    pub timestamp: DateTime<Utc>,
    pub function_count: Option<usize>,
    pub unique_function_count: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreOptions {
    #[serde(default)]
    pub compressor: Compressor,
    /// Reservoir cap on the comparison history; `None` keeps everything.
    #[serde(default)]
    pub max_history: Option<usize>,
    #[serde(default)]
    pub history_seed: u64,
}

#[derive(Debug)]
struct HistoryEntry {
    fuzzy: FuzzyDigest,
    text: Arc<[u8]>,
    compressed: OnceLock<usize>,
}

impl HistoryEntry {
    fn new(digest: &BinaryDigest, text: &TextSection) -> Self {
        Self {
            fuzzy: digest.fuzzy.clone(),
            text: text.bytes.clone().into(),
            compressed: OnceLock::new(),
        }
    }

    fn compressed_len(&self, c: &Compressor) -> usize {
        *self.compressed.get_or_init(|| c.compressed_len(&self.text))
    }
}

/// Counters exposed over the stats endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub unique_binaries: usize,
    pub dedup_hits: u64,
    pub archive_bytes: u64,
}

/// Labels allowed as directory names under the archive root.
pub fn valid_program_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Archive and scoring state for one program.
///
/// Not internally synchronized: wrap in a mutex to share across workers;
/// `score` and `register_baseline` are each one critical section.
#[derive(Debug)]
pub struct ProgramStore {
    program_id: String,
    dir: PathBuf,
    options: StoreOptions,
    seen: HashSet<Hash256>,
    function_hashes: HashSet<u64>,
    history: Vec<HistoryEntry>,
    /// Entries offered to the history reservoir so far.
    offered: u64,
    reservoir_rng: ChaCha8Rng,
    baseline: Option<HistoryEntry>,
    records: Vec<MetaRecord>,
    meta: File,
    dedup_hits: u64,
    archive_bytes: u64,
}

impl ProgramStore {
    /// Opens (or creates) `<archive_root>/<program_id>` and replays any
    /// existing `meta.jsonl`.
    pub fn open(archive_root: &Path, program_id: &str, options: StoreOptions) -> Result<Self, FitnessError> {
        if !valid_program_id(program_id) {
            return Err(FitnessError::InvalidProgramId(program_id.to_string()));
        }
        let dir = archive_root.join(program_id);
        fs::create_dir_all(dir.join("bin"))?;
        let meta_path = dir.join("meta.jsonl");
        let existing = read_meta(&meta_path)?;
        let meta = OpenOptions::new().create(true).append(true).open(&meta_path)?;
        let mut store = Self {
            program_id: program_id.to_string(),
            dir,
            options,
            seen: HashSet::new(),
            function_hashes: HashSet::new(),
            history: Vec::new(),
            offered: 0,
            reservoir_rng: ChaCha8Rng::seed_from_u64(options.history_seed),
            baseline: None,
            records: Vec::new(),
            meta,
            dedup_hits: 0,
            archive_bytes: 0,
        };
        for record in existing {
            let path = store.binary_path(&record.content_hash);
            let bytes = fs::read(&path)
                .map_err(|e| FitnessError::Corrupt(format!("{}: {e}", path.display())))?;
            let candidate = Candidate::from_elf(bytes)?;
            if candidate.digest.text_hash != record.text_hash {
                return Err(FitnessError::Corrupt(format!("{} does not match its record", path.display())));
            }
            if record.baseline {
                store.baseline = Some(HistoryEntry::new(&candidate.digest, &candidate.text));
            }
            store.absorb(&candidate);
            store.records.push(record);
        }
        Ok(store)
    }

    pub fn program_id(&self) -> &str {
        &self.program_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[MetaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn has_baseline(&self) -> bool {
        self.baseline.is_some()
    }

    pub fn has_seen(&self, text_hash: &Hash256) -> bool {
        self.seen.contains(text_hash)
    }

    pub fn function_hashes(&self) -> &HashSet<u64> {
        &self.function_hashes
    }

    /// Strategy of the first scored (non-baseline) record, if any.
    pub fn recorded_strategy(&self) -> Option<&str> {
        self.records.iter().find(|r| !r.baseline).map(|r| r.strategy.as_str())
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            unique_binaries: self.seen.len(),
            dedup_hits: self.dedup_hits,
            archive_bytes: self.archive_bytes,
        }
    }

    fn binary_path(&self, content_hash: &Hash256) -> PathBuf {
        self.dir.join("bin").join(content_hash.to_hex())
    }

    /// Computes the score of an unseen binary without touching state.
    fn raw_score(&self, c: &Candidate, strategy: &Strategy) -> Result<(f64, Option<usize>), FitnessError> {
        let compressor = &self.options.compressor;
        let ncd_to = |entry: &HistoryEntry, cx: usize| {
            compressor.ncd_with(&c.text.bytes, cx, &entry.text, entry.compressed_len(compressor))
        };
        let unique_functions = c
            .digest
            .functions
            .as_ref()
            .map(|fs| fs.iter().filter(|f| !self.function_hashes.contains(&f.hash)).count());
        let score = match strategy {
            Strategy::Fh => {
                let functions = c.digest.functions.as_ref().ok_or(FitnessError::FhRequiresSymbols)?;
                if self.history.is_empty() && self.seen.is_empty() {
                    1.0
                } else if functions.is_empty() {
                    log::warn!("{}: Fh on a binary with no function symbols", self.program_id);
                    0.0
                } else {
                    unique_functions.unwrap_or(0) as f64 / functions.len() as f64
                }
            }
            Strategy::Pa | Strategy::Pm | Strategy::Na | Strategy::Nm => {
                if self.history.is_empty() {
                    1.0
                } else {
                    let scores: Vec<f64> = match strategy {
                        Strategy::Pa | Strategy::Pm => self
                            .history
                            .iter()
                            .map(|h| fuzzy_difference(&c.digest.fuzzy, &h.fuzzy))
                            .collect(),
                        _ => {
                            let cx = compressor.compressed_len(&c.text.bytes);
                            self.history.iter().map(|h| ncd_to(h, cx)).collect()
                        }
                    };
                    aggregate(matches!(strategy, Strategy::Pa | Strategy::Na), &scores)
                }
            }
            Strategy::No => {
                let baseline = self.baseline.as_ref().ok_or(FitnessError::BaselineMissing)?;
                ncd_to(baseline, compressor.compressed_len(&c.text.bytes))
            }
            Strategy::Binary01(inner) => {
                let (s, _) = self.raw_score(c, inner)?;
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok((score, unique_functions))
    }

    /// Adds a binary's hashes and history entry.
    fn absorb(&mut self, c: &Candidate) {
        self.seen.insert(c.digest.text_hash);
        if let Some(functions) = &c.digest.functions {
            self.function_hashes.extend(functions.iter().map(|f| f.hash));
        }
        self.archive_bytes += c.bytes.len() as u64;
        let entry = HistoryEntry::new(&c.digest, &c.text);
        self.offered += 1;
        match self.options.max_history {
            Some(cap) if self.history.len() >= cap => {
                // reservoir sampling keeps a uniform sample of everything offered
                let slot = self.reservoir_rng.random_range(0..self.offered);
                if (slot as usize) < cap {
                    self.history[slot as usize] = entry;
                }
            }
            _ => self.history.push(entry),
        }
    }

    fn archive(
        &mut self,
        c: &Candidate,
        dscore: f64,
        strategy: String,
        flags: &[String],
        unique_functions: Option<usize>,
        baseline: bool,
    ) -> Result<PathBuf, FitnessError> {
        let path = self.binary_path(&c.digest.content_hash);
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, &c.bytes)?;
            fs::rename(&tmp, &path)?;
        }
        let record = MetaRecord {
            content_hash: c.digest.content_hash,
            text_hash: c.digest.text_hash,
            dscore,
            strategy,
            flags: flags.to_vec(),
            timestamp: Utc::now(),
            function_count: c.digest.functions.as_ref().map(Vec::len),
            unique_function_count: unique_functions,
            baseline,
        };
        let mut line = serde_json::to_string(&record).map_err(std::io::Error::from)?;
        line.push('\n');
        self.meta.write_all(line.as_bytes())?;
        self.absorb(c);
        self.records.push(record);
        Ok(path)
    }

    /// Scores `candidate` and, if its `.text` is new, archives it.
    pub fn score(
        &mut self,
        candidate: &Candidate,
        strategy: &Strategy,
        flags: &[String],
    ) -> Result<ScoreResult, FitnessError> {
        if self.seen.contains(&candidate.digest.text_hash) {
            self.dedup_hits += 1;
            return Ok(ScoreResult::duplicate());
        }
        let (dscore, unique_functions) = self.raw_score(candidate, strategy)?;
        let dscore = dscore.clamp(0.0, 1.0);
        let path = self.archive(candidate, dscore, strategy.to_string(), flags, unique_functions, false)?;
        Ok(ScoreResult {
            dscore,
            unique: true,
            stored_as: Some(path),
        })
    }

    /// Registers the `-O0` reference binary. It also counts as seen.
    pub fn register_baseline(&mut self, candidate: &Candidate, flags: &[String]) -> Result<(), FitnessError> {
        if self.baseline.is_some() {
            return Err(FitnessError::BaselineExists);
        }
        self.baseline = Some(HistoryEntry::new(&candidate.digest, &candidate.text));
        if !self.seen.contains(&candidate.digest.text_hash) {
            let unique = candidate
                .digest
                .functions
                .as_ref()
                .map(|fs| fs.iter().filter(|f| !self.function_hashes.contains(&f.hash)).count());
            self.archive(candidate, 0.0, "baseline".into(), flags, unique, true)?;
        } else {
            // already archived as a variant; mark it by appending a baseline record
            let path = self.binary_path(&candidate.digest.content_hash);
            if !path.exists() {
                fs::write(&path, &candidate.bytes)?;
            }
            let record = MetaRecord {
                content_hash: candidate.digest.content_hash,
                text_hash: candidate.digest.text_hash,
                dscore: 0.0,
                strategy: "baseline".into(),
                flags: flags.to_vec(),
                timestamp: Utc::now(),
                function_count: candidate.digest.functions.as_ref().map(Vec::len),
                unique_function_count: Some(0),
                baseline: true,
            };
            let mut line = serde_json::to_string(&record).map_err(std::io::Error::from)?;
            line.push('\n');
            self.meta.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Mean (`Pa`/`Na`) or minimum (`Pm`/`Nm`) of per-history scores.
fn aggregate(mean: bool, scores: &[f64]) -> f64 {
    if mean {
        scores.iter().sum::<f64>() / scores.len() as f64
    } else {
        scores.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Reads `meta.jsonl`; a missing file yields no records.
pub fn read_meta(path: &Path) -> Result<Vec<MetaRecord>, FitnessError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| FitnessError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}
