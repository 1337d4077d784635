//! HTTP front end for the fitness store.
//!
//! ```text
//! POST /v1/programs/{id}/score[?strategy=..]   raw ELF body -> {dscore, unique, content_hash}
//! POST /v1/programs/{id}/baseline              raw ELF body -> {registered, content_hash}
//! GET  /v1/programs/{id}/stats                 -> {unique_binaries, dedup_hits, strategy, archive_bytes}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::binary::Compressor;
use crate::fitness::{valid_program_id, Candidate, FitnessError, ProgramStore, StoreOptions, Strategy};

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_strategy() -> Strategy {
    Strategy::Fh
}

fn default_max_upload() -> usize {
    256 * 1024 * 1024
}

fn default_level() -> u32 {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub archive_root: PathBuf,
    #[serde(default = "default_strategy")]
    pub default_strategy: Strategy,
    /// Per-program strategies, pinned from the start.
    #[serde(default)]
    pub strategies: BTreeMap<String, Strategy>,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: usize,
    #[serde(default = "default_level")]
    pub compression_level: u32,
    #[serde(default)]
    pub max_history: Option<usize>,
}

impl ServiceConfig {
    pub fn new(archive_root: impl Into<PathBuf>) -> Self {
        Self {
            bind: default_bind(),
            archive_root: archive_root.into(),
            default_strategy: default_strategy(),
            strategies: BTreeMap::new(),
            max_upload_bytes: default_max_upload(),
            compression_level: default_level(),
            max_history: None,
        }
    }

    /// Reads TOML; a relative `archive_root` is taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if config.archive_root.is_relative() {
            config.archive_root = path.parent().unwrap_or(Path::new(".")).join(&config.archive_root);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_upload_bytes == 0 {
            return Err("max_upload_bytes must be positive".into());
        }
        if self.compression_level > 9 {
            return Err(format!("compression_level must be 0..=9, got {}", self.compression_level));
        }
        Ok(())
    }

    fn store_options(&self) -> StoreOptions {
        StoreOptions {
            compressor: Compressor::new(self.compression_level),
            max_history: self.max_history,
            history_seed: 0,
        }
    }
}

#[derive(Debug)]
struct ProgramSlot {
    store: ProgramStore,
    /// Fixed by the first scoring request, or by the archive's history.
    strategy: Option<Strategy>,
}

/// Shared state behind the router.
#[derive(Debug)]
pub struct Registry {
    config: ServiceConfig,
    programs: Mutex<HashMap<String, Arc<Mutex<ProgramSlot>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<FitnessError> for ApiError {
    fn from(e: FitnessError) -> Self {
        let status = match e {
            FitnessError::FhRequiresSymbols | FitnessError::Elf(_) => StatusCode::UNPROCESSABLE_ENTITY,
            FitnessError::BaselineMissing | FitnessError::BaselineExists => StatusCode::CONFLICT,
            FitnessError::InvalidProgramId(_) => StatusCode::BAD_REQUEST,
            FitnessError::Io(_) | FitnessError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl Registry {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            programs: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Opens the program's store, creating it unless `must_exist`.
    fn slot(&self, id: &str, must_exist: bool) -> Result<Arc<Mutex<ProgramSlot>>, ApiError> {
        if !valid_program_id(id) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("invalid program id {id:?}")));
        }
        let mut programs = lock(&self.programs);
        if let Some(slot) = programs.get(id) {
            return Ok(slot.clone());
        }
        if must_exist && !self.config.archive_root.join(id).is_dir() {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown program {id:?}")));
        }
        let store = ProgramStore::open(&self.config.archive_root, id, self.config.store_options())?;
        let strategy = store.recorded_strategy().and_then(|s| s.parse().ok());
        let slot = Arc::new(Mutex::new(ProgramSlot { store, strategy }));
        programs.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// Scores one upload, exactly as an in-process [`ProgramStore::score`] would.
    pub fn score(&self, id: &str, requested: Option<Strategy>, body: &[u8]) -> Result<ScoreResponse, ApiError> {
        let slot = self.slot(id, false)?;
        let candidate = Candidate::from_elf(body.to_vec()).map_err(FitnessError::from)?;
        let mut slot = lock(&slot);
        let pinned = slot.strategy.clone().or_else(|| self.config.strategies.get(id).cloned());
        if let (Some(p), Some(r)) = (&pinned, &requested) {
            if p != r {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    format!("program {id:?} is pinned to strategy {p}"),
                ));
            }
        }
        let strategy = pinned
            .or(requested)
            .unwrap_or_else(|| self.config.default_strategy.clone());
        let result = slot.store.score(&candidate, &strategy, &[])?;
        slot.strategy.get_or_insert(strategy);
        Ok(ScoreResponse {
            dscore: result.dscore,
            unique: result.unique,
            content_hash: candidate.digest.content_hash.to_hex(),
        })
    }

    pub fn register_baseline(&self, id: &str, body: &[u8]) -> Result<serde_json::Value, ApiError> {
        let slot = self.slot(id, false)?;
        let candidate = Candidate::from_elf(body.to_vec()).map_err(FitnessError::from)?;
        lock(&slot).store.register_baseline(&candidate, &["-O0".to_string()])?;
        Ok(json!({ "registered": true, "content_hash": candidate.digest.content_hash.to_hex() }))
    }

    pub fn stats(&self, id: &str) -> Result<StatsResponse, ApiError> {
        let slot = self.slot(id, true)?;
        let slot = lock(&slot);
        let st = slot.store.stats();
        Ok(StatsResponse {
            program_id: id.to_string(),
            unique_binaries: st.unique_binaries,
            dedup_hits: st.dedup_hits,
            strategy: slot.strategy.as_ref().map(ToString::to_string),
            archive_bytes: st.archive_bytes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub dscore: f64,
    pub unique: bool,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub program_id: String,
    pub unique_binaries: usize,
    pub dedup_hits: u64,
    pub strategy: Option<String>,
    pub archive_bytes: u64,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn score_handler(
    State(reg): State<Arc<Registry>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Json<ScoreResponse>, ApiError> {
    let requested = match query.get("strategy") {
        Some(s) => Some(
            s.parse::<Strategy>()
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
        ),
        None => None,
    };
    blocking(move || reg.score(&id, requested, &body)).await.map(Json)
}

async fn baseline_handler(
    State(reg): State<Arc<Registry>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(move || reg.register_baseline(&id, &body)).await.map(Json)
}

async fn stats_handler(
    State(reg): State<Arc<Registry>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<StatsResponse>, ApiError> {
    blocking(move || reg.stats(&id)).await.map(Json)
}

pub fn router(registry: Arc<Registry>) -> Router {
    let limit = registry.config.max_upload_bytes;
    Router::new()
        .route("/v1/programs/{id}/score", post(score_handler))
        .route("/v1/programs/{id}/baseline", post(baseline_handler))
        .route("/v1/programs/{id}/stats", get(stats_handler))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(registry)
}

/// Serves on an already-bound listener until `shutdown` resolves; requests
/// in flight at that point are allowed to finish.
pub async fn serve(
    listener: std::net::TcpListener,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Binds `config.bind` and serves until SIGINT/SIGTERM.
pub fn run_service(config: ServiceConfig) -> std::io::Result<()> {
    let listener = std::net::TcpListener::bind(&config.bind)?;
    log::info!("listening on {}", listener.local_addr()?);
    let registry = Registry::new(config);
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(listener, registry, shutdown_signal()))
}
