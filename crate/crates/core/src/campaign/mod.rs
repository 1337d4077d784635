//! The feedback loop: select a seed, mutate it, build, score, collect.

mod config;
mod corpus;
mod mutate;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::build::{BuildError, BuildStatus};
use crate::catalog::CatalogError;
use crate::fitness::{Candidate, FitnessError, ProgramStore};
use crate::seed::{map_seed, Seed};

pub use config::{Budget, Campaign, CampaignConfig, CampaignSettings, CompilerConfig, FitnessConfig, SearchMode};
pub use corpus::{CheckpointError, CorpusEntry, WeightedCorpus};
pub use mutate::{bit_flip, byte_flip, fit_width, mutate, random_seed, splice, MutationOp};
pub use stats::{CampaignStats, ScoreHistogram};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CampaignError {
    /// Whether the failure is in the setup rather than the run.
    pub fn is_configuration(&self) -> bool {
        match self {
            CampaignError::Config(_) | CampaignError::Read { .. } | CampaignError::Catalog { .. } => true,
            CampaignError::Build(e) => e.is_configuration(),
            CampaignError::Fitness(e) => matches!(
                e,
                FitnessError::FhRequiresSymbols | FitnessError::BaselineMissing | FitnessError::InvalidProgramId(_)
            ),
            CampaignError::Checkpoint(_) | CampaignError::Io(_) => false,
        }
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: u64,
    pub worker: usize,
    /// `None` when the build itself errored.
    pub status: Option<BuildStatus>,
    pub op: Option<MutationOp>,
    pub dscore: f64,
    pub unique: bool,
}

pub type StatsHook<'a> = &'a (dyn Fn(&CampaignStats) + Sync);
pub type IterationHook<'a> = &'a (dyn Fn(&IterationRecord) + Sync);

/// Optional hooks for a running campaign.
#[derive(Default, Clone, Copy)]
pub struct RunControl<'a> {
    /// Checked between iterations; setting it ends the run after a final checkpoint.
    pub stop: Option<&'a AtomicBool>,
    pub on_progress: Option<StatsHook<'a>>,
    pub on_iteration: Option<IterationHook<'a>>,
}

/// Final statistics plus each worker's own counters.
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub stats: CampaignStats,
    pub per_worker: Vec<CampaignStats>,
}

pub fn corpus_path(archive_root: &Path, program_id: &str) -> PathBuf {
    archive_root.join(program_id).join("corpus.jsonl")
}

pub fn stats_path(archive_root: &Path, program_id: &str) -> PathBuf {
    archive_root.join(program_id).join("stats.json")
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

struct Shared<'a> {
    campaign: &'a Campaign,
    control: RunControl<'a>,
    store: Mutex<ProgramStore>,
    corpus: RwLock<WeightedCorpus>,
    workers: Vec<Mutex<CampaignStats>>,
    claimed: AtomicU64,
    completed: AtomicU64,
    halt: AtomicBool,
    failure: Mutex<Option<CampaignError>>,
    /// Serializes checkpoint writes.
    checkpoint: Mutex<()>,
    started: Instant,
    deadline: Option<Instant>,
}

impl Shared<'_> {
    fn stopped(&self) -> bool {
        self.halt.load(Ordering::Relaxed)
            || self.control.stop.is_some_and(|s| s.load(Ordering::Relaxed))
            || self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Claims the next iteration number, if the budget allows.
    fn claim(&self) -> Option<u64> {
        if self.stopped() {
            return None;
        }
        let i = self.claimed.fetch_add(1, Ordering::Relaxed);
        match self.campaign.settings.budget.iterations {
            Some(n) if i >= n => None,
            _ => Some(i),
        }
    }

    fn fail(&self, e: CampaignError) {
        self.halt.store(true, Ordering::Relaxed);
        lock(&self.failure).get_or_insert(e);
    }

    fn snapshot(&self) -> (CampaignStats, Vec<CampaignStats>) {
        let per_worker: Vec<CampaignStats> = self.workers.iter().map(|w| lock(w).clone()).collect();
        let mut total = CampaignStats::new(self.campaign.settings.strategy.to_string());
        for w in &per_worker {
            total.absorb(w);
        }
        total.unique_binaries = lock(&self.store).stats().unique_binaries as u64;
        let corpus = self.corpus.read().unwrap_or_else(|e| e.into_inner());
        total.corpus_size = corpus.len() as u64;
        total.corpus_total_weight = corpus.total_weight();
        total.elapsed_secs = self.started.elapsed().as_secs_f64();
        (total, per_worker)
    }

    fn write_checkpoint(&self) -> Result<CampaignStats, CampaignError> {
        let _guard = lock(&self.checkpoint);
        let s = &self.campaign.settings;
        let snapshot = {
            // hold the corpus lock so the stats and corpus files agree
            let corpus = self.corpus.read().unwrap_or_else(|e| e.into_inner());
            corpus.save(&corpus_path(&s.archive_root, &s.program_id))?;
            drop(corpus);
            self.snapshot().0
        };
        let path = stats_path(&s.archive_root, &s.program_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&snapshot).map_err(std::io::Error::from)?)?;
        fs::rename(&tmp, &path)?;
        Ok(snapshot)
    }
}

fn worker(shared: &Shared<'_>, index: usize) {
    let s = &shared.campaign.settings;
    let catalog = &shared.campaign.catalog;
    let backend = shared.campaign.backend.as_ref();
    let width = catalog.seed_width();
    let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed ^ index as u64);

    while let Some(iteration) = shared.claim() {
        let (seed, op) = next_seed(shared, s.mode, width, &mut rng);
        let selection = map_seed(catalog, &seed);
        let mut record = IterationRecord {
            index: iteration,
            worker: index,
            status: None,
            op,
            dscore: 0.0,
            unique: false,
        };
        let mut local = CampaignStats::new(String::new());
        local.iterations = 1;
        match backend.build(&selection) {
            Err(e) if e.is_configuration() => {
                shared.fail(e.into());
                break;
            }
            Err(e) => {
                log::warn!("iteration {iteration}: {e}");
                local.build_errors += 1;
            }
            Ok(outcome) => {
                record.status = Some(outcome.status);
                match outcome.status {
                    BuildStatus::Ok => {}
                    BuildStatus::FallbackUsed => local.fallback_count += 1,
                    BuildStatus::Crash => local.crash_count += 1,
                    BuildStatus::Timeout => local.timeout_count += 1,
                }
                let mut best = 0.0f64;
                for bytes in outcome.binaries {
                    let candidate = match Candidate::from_elf(bytes) {
                        Ok(c) => c,
                        Err(e) => {
                            log::warn!("iteration {iteration}: unusable binary: {e}");
                            local.build_errors += 1;
                            continue;
                        }
                    };
                    let scored = lock(&shared.store).score(&candidate, &s.strategy, &outcome.flags_used);
                    match scored {
                        Ok(r) if r.unique => {
                            local.histogram.add(r.dscore);
                            record.unique = true;
                            best = best.max(r.dscore);
                        }
                        Ok(_) => local.dedup_hits += 1,
                        Err(e) => {
                            shared.fail(e.into());
                            return;
                        }
                    }
                }
                if outcome.status == BuildStatus::FallbackUsed && best > 0.0 {
                    local.fallback_scored += 1;
                }
                record.dscore = best;
                if s.mode == SearchMode::Guided && best > 0.0 {
                    shared.corpus.write().unwrap_or_else(|e| e.into_inner()).collect(seed, best);
                }
            }
        }
        lock(&shared.workers[index]).absorb(&local);
        if let Some(hook) = shared.control.on_iteration {
            hook(&record);
        }
        let done = shared.completed.fetch_add(1, Ordering::AcqRel) + 1;
        if s.checkpoint_interval > 0 && done.is_multiple_of(s.checkpoint_interval) {
            if let Err(e) = shared.write_checkpoint() {
                log::warn!("checkpoint failed: {e}");
            }
        }
        if let Some(hook) = shared.control.on_progress {
            if s.progress_interval > 0 && done.is_multiple_of(s.progress_interval) {
                hook(&shared.snapshot().0);
            }
        }
    }
}

fn next_seed(shared: &Shared<'_>, mode: SearchMode, width: usize, rng: &mut ChaCha8Rng) -> (Seed, Option<MutationOp>) {
    if mode == SearchMode::Random {
        return (random_seed(width, rng), None);
    }
    let corpus = shared.corpus.read().unwrap_or_else(|e| e.into_inner());
    let Some(primary) = corpus.select(rng).map(|e| e.seed.clone()) else {
        drop(corpus);
        return (random_seed(width, rng), None);
    };
    let donor = if corpus.len() > 1 {
        corpus.select(rng).map(|e| e.seed.clone())
    } else {
        None
    };
    drop(corpus);
    let (seed, op) = mutate(&primary, donor.as_ref(), width, rng);
    (seed, Some(op))
}

fn open_store(campaign: &Campaign) -> Result<ProgramStore, CampaignError> {
    let s = &campaign.settings;
    let mut store = ProgramStore::open(&s.archive_root, &s.program_id, s.store)?;
    if s.strategy.needs_baseline() && !store.has_baseline() {
        let bytes = match &s.baseline {
            Some(path) => fs::read(path).map_err(|source| CampaignError::Read {
                path: path.clone(),
                source,
            })?,
            None => campaign.backend.build_fallback()?,
        };
        let candidate = Candidate::from_elf(bytes).map_err(FitnessError::from)?;
        store.register_baseline(&candidate, &["-O0".to_string()])?;
    }
    Ok(store)
}

fn load_corpus(campaign: &Campaign) -> Result<WeightedCorpus, CampaignError> {
    let s = &campaign.settings;
    let path = corpus_path(&s.archive_root, &s.program_id);
    if !s.resume || !path.exists() {
        return Ok(WeightedCorpus::new());
    }
    let expected = match fs::read(stats_path(&s.archive_root, &s.program_id)) {
        Ok(bytes) => serde_json::from_slice::<CampaignStats>(&bytes).ok().map(|st| st.corpus_total_weight),
        Err(_) => None,
    };
    Ok(WeightedCorpus::load(&path, campaign.catalog.seed_width(), expected)?)
}

/// Runs the campaign with `settings.workers` threads; with one worker the
/// run is fully determined by the settings and the backend.
pub fn run_campaign(campaign: &Campaign, control: RunControl<'_>) -> Result<CampaignOutcome, CampaignError> {
    let s = &campaign.settings;
    s.budget.validate().map_err(CampaignError::Config)?;
    if s.workers == 0 {
        return Err(CampaignError::Config("workers must be at least 1".into()));
    }
    let store = open_store(campaign)?;
    let corpus = load_corpus(campaign)?;
    let started = Instant::now();
    let shared = Shared {
        campaign,
        control,
        store: Mutex::new(store),
        corpus: RwLock::new(corpus),
        workers: (0..s.workers)
            .map(|_| Mutex::new(CampaignStats::new(s.strategy.to_string())))
            .collect(),
        claimed: AtomicU64::new(0),
        completed: AtomicU64::new(0),
        halt: AtomicBool::new(false),
        failure: Mutex::new(None),
        checkpoint: Mutex::new(()),
        started,
        deadline: s.budget.wall_clock_secs.map(|secs| started + Duration::from_secs_f64(secs)),
    };
    if s.workers == 1 {
        worker(&shared, 0);
    } else {
        std::thread::scope(|scope| {
            for i in 0..s.workers {
                let shared = &shared;
                scope.spawn(move || worker(shared, i));
            }
        });
    }
    if let Some(e) = lock(&shared.failure).take() {
        return Err(e);
    }
    let stats = if s.checkpoint_interval > 0 {
        shared.write_checkpoint()?
    } else {
        shared.snapshot().0
    };
    let (_, per_worker) = shared.snapshot();
    Ok(CampaignOutcome { stats, per_worker })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build::ToyProgram;
    use crate::catalog::parse_catalog;
    use crate::fitness::{read_meta, Strategy};

    fn switches(n: usize) -> crate::FlagCatalog {
        let text: String = (0..n).map(|i| format!("-f{i}\tswitch\n")).collect();
        parse_catalog(&text).unwrap()
    }

    fn toy(dir: &Path, effective: impl IntoIterator<Item = usize>, n: usize, budget: Budget) -> Campaign {
        let program = ToyProgram::independent("toy", 11, effective);
        let mut c = Campaign::toy(program, switches(n), dir, Strategy::Pm, budget).unwrap();
        c.settings.rng_seed = 9;
        c
    }

    #[test]
    fn zero_budget_is_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_campaign(&toy(dir.path(), 0..3, 4, Budget::iterations(0)), RunControl::default()).unwrap();
        let st = out.stats;
        assert_eq!(
            (st.iterations, st.unique_binaries, st.fallback_count, st.dedup_hits, st.corpus_size),
            (0, 0, 0, 0, 0)
        );
    }

    #[test]
    fn small_campaign_reaches_ceiling_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let c = toy(dir.path(), 0..3, 5, Budget::iterations(300));
        let out = run_campaign(&c, RunControl::default()).unwrap();
        assert_eq!(out.stats.unique_binaries, 8);
        assert_eq!(out.stats.iterations, 300);
        assert!(out.stats.dedup_hits > 0);
        let meta = read_meta(&dir.path().join("toy/meta.jsonl")).unwrap();
        assert_eq!(meta.len(), 8);
        let corpus = WeightedCorpus::load(&corpus_path(dir.path(), "toy"), 5, Some(out.stats.corpus_total_weight)).unwrap();
        assert_eq!(corpus.len() as u64, out.stats.corpus_size);
        assert!(corpus.entries().iter().all(|e| e.weight > 0.0));
    }

    #[test]
    fn replay_gives_identical_stats() {
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            run_campaign(&toy(dir.path(), [0, 2, 4, 6], 8, Budget::iterations(200)), RunControl::default())
                .unwrap()
                .stats
        };
        let (a, b) = (run(), run());
        assert!(a.same_counts(&b), "{a:?}\n{b:?}");
    }

    #[test]
    fn stop_flag_ends_run() {
        let dir = tempfile::tempdir().unwrap();
        let stop = AtomicBool::new(true);
        let control = RunControl {
            stop: Some(&stop),
            ..RunControl::default()
        };
        let out = run_campaign(&toy(dir.path(), 0..3, 4, Budget::iterations(1000)), control).unwrap();
        assert_eq!(out.stats.iterations, 0);
        assert!(corpus_path(dir.path(), "toy").exists());
    }

    #[test]
    fn resume_continues_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = toy(dir.path(), 0..4, 6, Budget::iterations(50));
        let first = run_campaign(&c, RunControl::default()).unwrap().stats;
        c.settings.resume = true;
        c.settings.rng_seed = 10;
        let second = run_campaign(&c, RunControl::default()).unwrap().stats;
        assert!(second.corpus_size >= first.corpus_size);
        assert!(second.unique_binaries >= first.unique_binaries);
    }

    #[test]
    fn no_strategy_registers_fallback_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = toy(dir.path(), 0..3, 4, Budget::iterations(100));
        c.settings.strategy = Strategy::No;
        let out = run_campaign(&c, RunControl::default()).unwrap();
        assert_eq!(out.stats.unique_binaries, 8);
        let meta = read_meta(&dir.path().join("toy/meta.jsonl")).unwrap();
        assert!(meta[0].baseline);
    }

    #[test]
    fn parallel_counters_add_up() {
        let dir = tempfile::tempdir().unwrap();
        let program = ToyProgram {
            conflict_pairs: vec![(0, 1), (2, 3)],
            ..ToyProgram::independent("toy", 3, 0..6)
        };
        let mut c = Campaign::toy(program, switches(8), dir.path(), Strategy::Fh, Budget::iterations(400)).unwrap();
        c.settings.workers = 4;
        let out = run_campaign(&c, RunControl::default()).unwrap();
        let sum = |f: fn(&CampaignStats) -> u64| out.per_worker.iter().map(f).sum::<u64>();
        assert_eq!(out.stats.iterations, 400);
        assert_eq!(sum(|s| s.iterations), 400);
        assert_eq!(out.stats.fallback_count, sum(|s| s.fallback_count));
        assert!(out.stats.fallback_count > 0);
        assert!(out.stats.fallback_scored <= 1);
    }
}
