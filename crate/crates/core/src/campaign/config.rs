use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::binary::Compressor;
use crate::build::{BuildBackend, CompilerProfile, CrashLog, Driver, ToyBackend, ToyProgram};
use crate::catalog::{parse_catalog, FlagCatalog};
use crate::fitness::{StoreOptions, Strategy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Weighted corpus selection plus mutation.
    #[default]
    Guided,
    /// Every iteration draws a fresh uniform seed; the corpus is unused.
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub iterations: Option<u64>,
    pub wall_clock_secs: Option<f64>,
}

impl Budget {
    pub fn iterations(n: u64) -> Self {
        Self {
            iterations: Some(n),
            wall_clock_secs: None,
        }
    }

    pub fn wall_clock(secs: f64) -> Self {
        Self {
            iterations: None,
            wall_clock_secs: Some(secs),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.iterations.is_none() && self.wall_clock_secs.is_none() {
            return Err("budget needs `iterations` or `wall_clock_secs`".into());
        }
        if let Some(s) = self.wall_clock_secs {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("wall_clock_secs must be a non-negative number, got {s}"));
            }
        }
        Ok(())
    }
}

/// Everything about a campaign except the catalog and the compiler.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSettings {
    pub program_id: String,
    pub strategy: Strategy,
    pub mode: SearchMode,
    pub budget: Budget,
    pub rng_seed: u64,
    pub workers: usize,
    pub archive_root: PathBuf,
    /// Write `corpus.jsonl` and `stats.json` every this many iterations; 0 disables.
    pub checkpoint_interval: u64,
    /// Report progress every this many iterations; 0 disables.
    pub progress_interval: u64,
    /// Continue from an existing `corpus.jsonl`.
    pub resume: bool,
    pub store: StoreOptions,
    /// Pre-built `-O0` binary; without it the backend's fallback build is used.
    pub baseline: Option<PathBuf>,
}

impl CampaignSettings {
    pub fn new(program_id: impl Into<String>, archive_root: impl Into<PathBuf>, strategy: Strategy, budget: Budget) -> Self {
        Self {
            program_id: program_id.into(),
            strategy,
            mode: SearchMode::Guided,
            budget,
            rng_seed: 0,
            workers: 1,
            archive_root: archive_root.into(),
            checkpoint_interval: 500,
            progress_interval: 100,
            resume: false,
            store: StoreOptions::default(),
            baseline: None,
        }
    }
}

/// A campaign ready to run.
#[derive(Clone)]
pub struct Campaign {
    pub settings: CampaignSettings,
    pub catalog: FlagCatalog,
    pub backend: Arc<dyn BuildBackend>,
}

impl Campaign {
    pub fn new(settings: CampaignSettings, catalog: FlagCatalog, backend: Arc<dyn BuildBackend>) -> Self {
        Self {
            settings,
            catalog,
            backend,
        }
    }

    /// Toy campaign over `program`, with the program's id.
    pub fn toy(
        program: ToyProgram,
        catalog: FlagCatalog,
        archive_root: impl Into<PathBuf>,
        strategy: Strategy,
        budget: Budget,
    ) -> Result<Self, CampaignError> {
        let settings = CampaignSettings::new(program.program_id.clone(), archive_root, strategy, budget);
        let backend = ToyBackend::new(program, &catalog)?;
        Ok(Self::new(settings, catalog, Arc::new(backend)))
    }
}

fn default_strategy() -> Strategy {
    Strategy::Fh
}

fn default_workers() -> usize {
    1
}

fn default_checkpoint() -> u64 {
    500
}

fn default_progress() -> u64 {
    100
}

fn default_level() -> u32 {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompilerConfig {
    /// Toy compiler; `program` is a JSON [`ToyProgram`] file.
    Toy { program: PathBuf },
    External {
        source: PathBuf,
        #[serde(flatten)]
        profile: CompilerProfile,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitnessConfig {
    #[serde(default = "default_level")]
    pub compression_level: u32,
    #[serde(default)]
    pub max_history: Option<usize>,
    #[serde(default)]
    pub baseline: Option<PathBuf>,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            compression_level: default_level(),
            max_history: None,
            baseline: None,
        }
    }
}

/// On-disk campaign description (TOML). Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub program_id: String,
    pub catalog: PathBuf,
    pub compiler: CompilerConfig,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub mode: SearchMode,
    pub budget: Budget,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub archive_root: PathBuf,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_interval: u64,
    #[serde(default = "default_progress")]
    pub progress_interval: u64,
    #[serde(default)]
    pub resume: bool,
    #[serde(default)]
    pub fitness: FitnessConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(path: &Path) -> Result<String, CampaignError> {
    fs::read_to_string(path).map_err(|source| CampaignError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = read(path)?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.catalog = resolve(base, &self.catalog);
        self.archive_root = resolve(base, &self.archive_root);
        if let Some(b) = &mut self.fitness.baseline {
            *b = resolve(base, b);
        }
        match &mut self.compiler {
            CompilerConfig::Toy { program } => *program = resolve(base, program),
            CompilerConfig::External { source, profile } => {
                *source = resolve(base, source);
                profile.work_dir = resolve(base, &profile.work_dir);
            }
        }
    }

    pub fn settings(&self) -> Result<CampaignSettings, CampaignError> {
        self.budget.validate().map_err(CampaignError::Config)?;
        if self.workers == 0 {
            return Err(CampaignError::Config("workers must be at least 1".into()));
        }
        if self.fitness.compression_level > 9 {
            return Err(CampaignError::Config(format!(
                "compression_level must be 0..=9, got {}",
                self.fitness.compression_level
            )));
        }
        if self.fitness.max_history == Some(0) {
            return Err(CampaignError::Config("max_history must be at least 1".into()));
        }
        Ok(CampaignSettings {
            program_id: self.program_id.clone(),
            strategy: self.strategy.clone(),
            mode: self.mode,
            budget: self.budget,
            rng_seed: self.rng_seed,
            workers: self.workers,
            archive_root: self.archive_root.clone(),
            checkpoint_interval: self.checkpoint_interval,
            progress_interval: self.progress_interval,
            resume: self.resume,
            store: StoreOptions {
                compressor: Compressor::new(self.fitness.compression_level),
                max_history: self.fitness.max_history,
                history_seed: self.rng_seed,
            },
            baseline: self.fitness.baseline.clone(),
        })
    }

    /// Reads the catalog and sets up the compiler backend.
    pub fn into_campaign(self) -> Result<Campaign, CampaignError> {
        let settings = self.settings()?;
        let catalog = parse_catalog(&read(&self.catalog)?).map_err(|source| CampaignError::Catalog {
            path: self.catalog.clone(),
            source,
        })?;
        let backend: Arc<dyn BuildBackend> = match self.compiler {
            CompilerConfig::Toy { program } => {
                let text = read(&program)?;
                let mut toy: ToyProgram = serde_json::from_str(&text)
                    .map_err(|e| CampaignError::Config(format!("{}: {e}", program.display())))?;
                toy.program_id = settings.program_id.clone();
                Arc::new(ToyBackend::new(toy, &catalog)?)
            }
            CompilerConfig::External { source, profile } => {
                let log = Arc::new(CrashLog::new(CrashLog::under(&settings.archive_root)));
                Arc::new(Driver::new(settings.program_id.clone(), profile, source, Some(log))?)
            }
        };
        Ok(Campaign::new(settings, catalog, backend))
    }
}
