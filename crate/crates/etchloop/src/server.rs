//! HTTP/JSON annotation service.
//!
//! Each live session owns a [`SessionState`] behind a mutex; mutations run on
//! the blocking pool one at a time per session and are journaled before they
//! are applied. Reads are served from a copy-on-write view that is swapped
//! after every mutation, so a slow refine never blocks patch or report
//! requests. A session's journal plus its meta file are enough to rebuild it
//! after a restart.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use etchloop_core::io::{depth_preview, encode_gray8_png, encode_mask_png, load_mirror};
use etchloop_core::preprocess::PatchSpec;
use etchloop_core::refiner::wire::{WireRequest, WireResponse};
use etchloop_core::refiner::{BackendSpec, IdentityRefiner, Refiner};
use etchloop_core::session::{read_journal, HistoryEntry, Journal, SessionInput, SessionState};
use etchloop_core::stats::StrokeWidthStats;
use etchloop_core::{BinaryMask, DepthMap, Error, HintMap, Sign};

use crate::commands::{build_refiner, conservative_width, prepared, session_config};
use crate::config::Config;
use crate::error::CliError;
use crate::stroke::Stroke;

/// JSON error body: `{"code": ..., "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::InvalidHint(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::LiveMode | Error::SimulatedMode => StatusCode::BAD_REQUEST,
            Error::BudgetExhausted(_) | Error::EmptyHistory => StatusCode::CONFLICT,
            Error::BackendUnavailable(_) | Error::Protocol(_) | Error::ShapeMismatch { .. } => StatusCode::BAD_GATEWAY,
            Error::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
            Error::Format { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::FitFailure(_) | Error::UndefinedMetric(_) | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match e.code.as_str() {
            "invalid_argument" | "config_error" => StatusCode::UNPROCESSABLE_ENTITY,
            "live_mode" => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, &e.code, e.message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "code": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Session parameters persisted next to the journal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub mirror: String,
    pub backend: String,
    pub patch_size: usize,
    pub cap: usize,
    pub seed: u64,
    pub highpass_sigma: f64,
    pub created: f64,
}

#[derive(Clone, Debug)]
struct PatchView {
    pred: BinaryMask,
    delta: HintMap,
    hints_applied: usize,
}

#[derive(Clone, Debug)]
struct View {
    patches: Vec<Arc<PatchView>>,
    interaction_count: usize,
    annotated_pixels: usize,
    history: Vec<HistoryEntry>,
    suggested_patch: Option<usize>,
}

impl View {
    fn capture(state: &SessionState) -> Self {
        View {
            patches: state
                .patches()
                .iter()
                .map(|p| {
                    Arc::new(PatchView {
                        pred: p.pred.clone(),
                        delta: p.delta.clone(),
                        hints_applied: p.hints_applied,
                    })
                })
                .collect(),
            interaction_count: state.interaction_count(),
            annotated_pixels: state.annotated_pixels(),
            history: state.history().to_vec(),
            suggested_patch: state.suggest_patch(),
        }
    }

    /// Copy of `self` with patch `k` refreshed from `state`.
    fn updated(&self, state: &SessionState, k: usize) -> Self {
        let mut next = self.clone();
        let p = &state.patches()[k];
        next.patches[k] = Arc::new(PatchView {
            pred: p.pred.clone(),
            delta: p.delta.clone(),
            hints_applied: p.hints_applied,
        });
        next.interaction_count = state.interaction_count();
        next.annotated_pixels = state.annotated_pixels();
        next.history = state.history().to_vec();
        next.suggested_patch = state.suggest_patch();
        next
    }
}

struct SessionEntry {
    meta: SessionMeta,
    dims: (usize, usize),
    specs: Vec<PatchSpec>,
    depth: Vec<DepthMap>,
    previews: Vec<OnceLock<Vec<u8>>>,
    refiner_name: String,
    state: Mutex<SessionState>,
    view: RwLock<Arc<View>>,
}

impl SessionEntry {
    fn view(&self) -> Arc<View> {
        self.view.read().expect("view lock").clone()
    }

    fn preview(&self, k: usize) -> &[u8] {
        self.previews[k].get_or_init(|| encode_gray8_png(&depth_preview(&self.depth[k])))
    }
}

pub struct AppState {
    cfg: Config,
    brush_width: f64,
    refine_backend: Arc<dyn Refiner>,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
}

impl AppState {
    /// Service state for `cfg`. `stats` sets the suggested brush width; the
    /// `/v1/refine` endpoint serves the configured backend when it is
    /// identity or heuristic and the identity backend otherwise.
    pub fn new(cfg: Config, stats: Option<&StrokeWidthStats>) -> Result<Self, CliError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.journal_dir)?;
        let refine_backend: Arc<dyn Refiner> = match cfg.backend_spec()? {
            spec @ BackendSpec::Heuristic => spec.build(None, cfg.heuristic)?,
            _ => Arc::new(IdentityRefiner),
        };
        Ok(AppState {
            brush_width: stats.map_or(1.0, conservative_width),
            refine_backend,
            sessions: RwLock::new(HashMap::new()),
            cfg,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn journal_path(&self, id: &str) -> PathBuf {
        self.cfg.journal_dir.join(format!("{id}.jsonl"))
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.cfg.journal_dir.join(format!("{id}.meta.json"))
    }

    fn get(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn mirror_dir(&self, mirror: &str) -> Result<PathBuf, ApiError> {
        let plain = !mirror.is_empty() && mirror.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && mirror != "." && mirror != "..";
        if !plain {
            return Err(Error::InvalidArgument(format!("invalid mirror id {mirror:?}")).into());
        }
        let dir = self.cfg.dataset.join(mirror);
        if !dir.is_dir() {
            return Err(ApiError::not_found(format!("no mirror {mirror}")));
        }
        Ok(dir)
    }

    /// Builds the in-memory session for `meta` (without journal).
    fn open(&self, meta: SessionMeta) -> Result<SessionEntry, ApiError> {
        let spec: BackendSpec = meta.backend.parse()?;
        if spec.needs_ground_truth() {
            return Err(Error::LiveMode.into());
        }
        let mirror = prepared(load_mirror(&self.mirror_dir(&meta.mirror)?)?, meta.highpass_sigma)?;
        let dims = mirror.dims();
        let refiner = build_refiner(&self.cfg, &spec, None)?;
        let mut cfg = session_config(&self.cfg, meta.seed);
        cfg.patch_size = meta.patch_size;
        cfg.cap = meta.cap;
        let input = SessionInput {
            gt: None,
            ..SessionInput::from(mirror)
        };
        let state = SessionState::live(input, refiner, cfg)?;
        let specs: Vec<PatchSpec> = state.patches().iter().map(|p| p.spec).collect();
        let depth: Vec<DepthMap> = state.patches().iter().map(|p| p.depth.clone()).collect();
        Ok(SessionEntry {
            dims,
            previews: (0..specs.len()).map(|_| OnceLock::new()).collect(),
            refiner_name: state.refiner_name(),
            view: RwLock::new(Arc::new(View::capture(&state))),
            state: Mutex::new(state),
            specs,
            depth,
            meta,
        })
    }

    fn insert(&self, entry: SessionEntry) -> Arc<SessionEntry> {
        let entry = Arc::new(entry);
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(entry.meta.id.clone(), entry.clone());
        entry
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<SessionInfo, ApiError> {
        let meta = SessionMeta {
            id: uuid::Uuid::new_v4().simple().to_string(),
            mirror: req.mirror.clone(),
            backend: req.backend.clone().unwrap_or_else(|| self.cfg.backend.clone()),
            patch_size: req.patch_size.unwrap_or(self.cfg.patch_size),
            cap: req.cap.unwrap_or(self.cfg.cap),
            seed: req.seed.unwrap_or(self.cfg.seed),
            highpass_sigma: self.cfg.highpass_sigma,
            created: etchloop_core::session::journal::now_timestamp(),
        };
        let entry = self.open(meta)?;
        std::fs::write(
            self.meta_path(&entry.meta.id),
            serde_json::to_string_pretty(&entry.meta).map_err(|e| Error::Protocol(e.to_string()))?,
        )
        .map_err(Error::from)?;
        let journal = Journal::open(&self.journal_path(&entry.meta.id))?;
        entry.state.lock().expect("session lock").attach_journal(journal);
        let entry = self.insert(entry);
        Ok(self.info(&entry))
    }

    /// Rebuilds every session found in the journal directory. Returns the
    /// restored ids.
    pub fn restore_sessions(&self) -> Result<Vec<String>, ApiError> {
        let mut restored = Vec::new();
        let Ok(entries) = std::fs::read_dir(&self.cfg.journal_dir) else {
            return Ok(restored);
        };
        let mut metas: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
            .collect();
        metas.sort();
        for path in metas {
            let text = std::fs::read_to_string(&path).map_err(Error::from)?;
            let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let id = meta.id.clone();
            let entry = self.open(meta)?;
            let journal_path = self.journal_path(&id);
            {
                let mut state = entry.state.lock().expect("session lock");
                if journal_path.exists() {
                    state.replay(&read_journal(&journal_path)?)?;
                }
                state.attach_journal(Journal::open(&journal_path)?);
                *entry.view.write().expect("view lock") = Arc::new(View::capture(&state));
            }
            self.insert(entry);
            restored.push(id);
        }
        Ok(restored)
    }

    fn info(&self, entry: &SessionEntry) -> SessionInfo {
        let view = entry.view();
        SessionInfo {
            id: entry.meta.id.clone(),
            mirror: entry.meta.mirror.clone(),
            width: entry.dims.1,
            height: entry.dims.0,
            patch_size: entry.meta.patch_size,
            patches: entry.specs.clone(),
            refiner: entry.refiner_name.clone(),
            brush_width: self.brush_width,
            interaction_count: view.interaction_count,
            suggested_patch: view.suggested_patch,
        }
    }

    pub fn session_info(&self, id: &str) -> Result<SessionInfo, ApiError> {
        let entry = self.get(id)?;
        Ok(self.info(&entry))
    }

    pub fn patch(&self, id: &str, k: usize) -> Result<PatchResponse, ApiError> {
        let entry = self.get(id)?;
        let spec = *entry
            .specs
            .get(k)
            .ok_or_else(|| ApiError::not_found(format!("no patch {k}")))?;
        let view = entry.view();
        let p = &view.patches[k];
        Ok(PatchResponse {
            index: k,
            row: spec.row,
            col: spec.col,
            keep: spec.keep,
            size: entry.meta.patch_size,
            hints_applied: p.hints_applied,
            depth_png: B64.encode(entry.preview(k)),
            masks: MaskSet::of(&p.pred, &p.delta),
        })
    }

    /// Rasterizes `req.stroke`, refines and journals. Blocking.
    pub fn apply_hint(&self, id: &str, req: &HintRequest) -> Result<HintResponse, ApiError> {
        let entry = self.get(id)?;
        if req.patch >= entry.specs.len() {
            return Err(ApiError::not_found(format!("no patch {}", req.patch)));
        }
        let p = entry.meta.patch_size;
        let hint = req.stroke.rasterize(p, p)?;
        let mut state = entry.state.lock().expect("session lock");
        let refined = state.apply_live_hint(req.patch, &hint)?;
        let view = Arc::new(entry.view().updated(&state, req.patch));
        *entry.view.write().expect("view lock") = view.clone();
        drop(state);
        let delta = &view.patches[req.patch].delta;
        Ok(HintResponse {
            patch: req.patch,
            step: view.interaction_count,
            interaction_count: view.interaction_count,
            annotated_pixels: view.annotated_pixels,
            suggested_patch: view.suggested_patch,
            masks: MaskSet::of(&refined, delta),
        })
    }

    /// Reverts the most recent hint. Blocking.
    pub fn undo(&self, id: &str) -> Result<UndoResponse, ApiError> {
        let entry = self.get(id)?;
        let mut state = entry.state.lock().expect("session lock");
        let k = state.history().last().map(|h| h.patch).ok_or(Error::EmptyHistory)?;
        state.undo()?;
        let view = Arc::new(entry.view().updated(&state, k));
        *entry.view.write().expect("view lock") = view.clone();
        drop(state);
        let p = &view.patches[k];
        Ok(UndoResponse {
            patch: k,
            interaction_count: view.interaction_count,
            annotated_pixels: view.annotated_pixels,
            masks: MaskSet::of(&p.pred, &p.delta),
        })
    }

    pub fn report(&self, id: &str) -> Result<ReportResponse, ApiError> {
        let entry = self.get(id)?;
        let view = entry.view();
        Ok(ReportResponse {
            id: entry.meta.id.clone(),
            mirror: entry.meta.mirror.clone(),
            interaction_count: view.interaction_count,
            annotated_pixels: view.annotated_pixels,
            history: view.history.clone(),
            patch_scores: view.patches.iter().map(|p| p.hints_applied).collect(),
            suggested_patch: view.suggested_patch,
        })
    }

    /// Serves the remote wire protocol with the local backend. Blocking.
    pub fn refine(&self, req: &WireRequest) -> Result<WireResponse, ApiError> {
        let request = req.decode().map_err(|e| {
            // a malformed body is the caller's fault here, not a gateway failure
            let mut api = ApiError::from(e);
            api.status = StatusCode::UNPROCESSABLE_ENTITY;
            api
        })?;
        let mask = self.refine_backend.refine(&request)?;
        Ok(WireResponse::encode(&mask))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub mirror: String,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cap: Option<usize>,
    #[serde(default)]
    pub patch_size: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub mirror: String,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub patches: Vec<PatchSpec>,
    pub refiner: String,
    /// Suggested brush width, `mu - 2·sigma`.
    pub brush_width: f64,
    pub interaction_count: usize,
    pub suggested_patch: Option<usize>,
}

/// Current mask and accumulated hints of a patch, each a base64 PNG.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskSet {
    pub mask_png: String,
    pub add_png: String,
    pub erase_png: String,
}

impl MaskSet {
    fn of(mask: &BinaryMask, delta: &HintMap) -> Self {
        MaskSet {
            mask_png: B64.encode(encode_mask_png(mask)),
            add_png: B64.encode(encode_mask_png(&delta.mask_of(Sign::Add))),
            erase_png: B64.encode(encode_mask_png(&delta.mask_of(Sign::Erase))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatchResponse {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub keep: bool,
    pub size: usize,
    pub hints_applied: usize,
    /// Display-normalised 8-bit depth.
    pub depth_png: String,
    #[serde(flatten)]
    pub masks: MaskSet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HintRequest {
    pub patch: usize,
    #[serde(flatten)]
    pub stroke: Stroke,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HintResponse {
    pub patch: usize,
    pub step: usize,
    pub interaction_count: usize,
    pub annotated_pixels: usize,
    pub suggested_patch: Option<usize>,
    #[serde(flatten)]
    pub masks: MaskSet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UndoResponse {
    pub patch: usize,
    pub interaction_count: usize,
    pub annotated_pixels: usize,
    #[serde(flatten)]
    pub masks: MaskSet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportResponse {
    pub id: String,
    pub mirror: String,
    pub interaction_count: usize,
    pub annotated_pixels: usize,
    pub history: Vec<HistoryEntry>,
    /// Hints applied per patch.
    pub patch_scores: Vec<usize>,
    pub suggested_patch: Option<usize>,
}

impl ReportResponse {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(etchloop_core::session::CSV_HEADER);
        out.push('\n');
        out.push_str("0,,,,0\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
        for h in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                h.step,
                opt(h.pfm),
                opt(h.pfm_composed),
                opt(h.pfm_delta),
                h.annotated_pixels
            ));
        }
        out
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(State(app): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let info = blocking(move || app.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionInfo> {
    app.session_info(&id).map(Json)
}

async fn patch(State(app): State<Arc<AppState>>, UrlPath((id, k)): UrlPath<(String, usize)>) -> ApiResult<PatchResponse> {
    blocking(move || app.patch(&id, k)).await.map(Json)
}

async fn hint(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Json(req): Json<HintRequest>) -> ApiResult<HintResponse> {
    blocking(move || app.apply_hint(&id, &req)).await.map(Json)
}

async fn undo(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<UndoResponse> {
    blocking(move || app.undo(&id)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let report = app.report(&id)?;
    Ok(match q.format.as_deref() {
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], report.to_csv()).into_response(),
        None | Some("json") => Json(report).into_response(),
        Some(other) => return Err(Error::InvalidArgument(format!("unknown report format {other:?}")).into()),
    })
}

async fn refine(State(app): State<Arc<AppState>>, Json(req): Json<WireRequest>) -> ApiResult<WireResponse> {
    blocking(move || app.refine(&req)).await.map(Json)
}

pub fn router(app: Arc<AppState>) -> Router {
    let static_dir = app.cfg.static_dir.clone();
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/session", post(create))
        .route("/v1/session/{id}", get(session))
        .route("/v1/session/{id}/patch/{k}", get(patch))
        .route("/v1/session/{id}/hint", post(hint))
        .route("/v1/session/{id}/undo", post(undo))
        .route("/v1/session/{id}/report", get(report))
        .route("/v1/refine", post(refine))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback(move |uri: axum::http::Uri| static_file(dir.clone(), uri)),
        None => api,
    }
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// GET of a file under the UI bundle; `/` maps to `index.html`.
async fn static_file(root: PathBuf, uri: axum::http::Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let safe = std::path::Path::new(rel)
        .components()
        .all(|c| matches!(c, std::path::Component::Normal(_)));
    if !safe {
        return ApiError::not_found(uri.path().to_string()).into_response();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => ApiError::not_found(uri.path().to_string()).into_response(),
    }
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(
    app: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await
}
