//! HTTP front end over a [`StateStore`]. Requests that change the game are
//! serialized through one lock; evaluations run on the blocking pool and
//! commit their results under the same lock.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use anyhow::Result;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dfgc_core::agents::DetectorSpec;
use dfgc_core::game::{Game, GamePhase, Job, PhaseId, RankedEntry, SubmissionRecord, SubmissionStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{copy_submission, pending, StateStore};

struct Inner {
    game: Game,
    store: StateStore,
}

pub struct AppState {
    inner: Mutex<Inner>,
    progress: Mutex<HashMap<String, Progress>>,
    eval_delay: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Progress {
    Queued,
    Running,
    Done,
    Rejected,
}

pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<dfgc_core::Error> for ApiError {
    fn from(e: dfgc_core::Error) -> Self {
        use dfgc_core::Error as E;
        let status = match &e {
            E::Phase(_) | E::Quota { .. } => StatusCode::FORBIDDEN,
            E::Frozen(_) | E::NoCounterparty(_) | E::State(_) => StatusCode::CONFLICT,
            E::Coverage { .. }
            | E::Extraneous { .. }
            | E::Naming { .. }
            | E::Image { .. }
            | E::Shape { .. }
            | E::Tamper { .. }
            | E::Parameter(_)
            | E::Config(_)
            | E::Io { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<dfgc_core::Error>() {
            Ok(core) => core.into(),
            Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("{e:#}")),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// A detector given either in compact form (`"plain"`, `"const:0.5"`) or
/// as a full spec object.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DetectorArg {
    Compact(String),
    Spec(DetectorSpec),
}

impl DetectorArg {
    fn spec(self) -> Result<DetectorSpec, dfgc_core::Error> {
        match self {
            DetectorArg::Compact(s) => DetectorSpec::parse_compact(&s),
            DetectorArg::Spec(s) => Ok(s),
        }
    }
}

/// Body of `POST /v1/submissions`: a server-visible image directory for a
/// creation phase, or a detector for a detection phase.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRequest {
    pub team: String,
    pub phase: Option<PhaseId>,
    pub dir: Option<PathBuf>,
    pub detector: Option<DetectorArg>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmissionView {
    pub id: String,
    pub status: Progress,
    pub record: SubmissionRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeaderboardView {
    pub phase: PhaseId,
    pub frozen: bool,
    pub entries: Vec<RankedEntry>,
}

impl AppState {
    /// Open the store, rebuild the game and queue any evaluations that
    /// were interrupted.
    pub fn open(root: &Path, eval_delay: Duration) -> Result<Arc<AppState>> {
        let (store, game) = StateStore::open(root)?;
        let resume = pending(&game);
        let state = Arc::new(AppState {
            inner: Mutex::new(Inner { game, store }),
            progress: Mutex::new(HashMap::new()),
            eval_delay,
        });
        for id in resume {
            let job = state.lock().game.state().job(&id)?;
            state.set_progress(&id, Progress::Queued);
            spawn_evaluation(state.clone(), job);
        }
        Ok(state)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn set_progress(&self, id: &str, p: Progress) {
        self.progress
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.to_string(), p);
    }

    fn progress_of(&self, rec: &SubmissionRecord) -> Progress {
        match rec.status {
            SubmissionStatus::Done => Progress::Done,
            SubmissionStatus::Rejected => Progress::Rejected,
            SubmissionStatus::Pending => self
                .progress
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .get(&rec.id)
                .copied()
                .unwrap_or(Progress::Queued),
        }
    }

    /// Register a submission; evaluation continues in the background.
    pub fn submit(self: &Arc<Self>, req: SubmissionRequest) -> ApiResult<Job> {
        let mut inner = self.lock();
        let Inner { game, store } = &mut *inner;
        let job = match (req.dir, req.detector) {
            (Some(dir), None) => {
                let id = game.state().next_submission_id();
                let archive = store.archive_dir(&id);
                if archive.exists() {
                    std::fs::remove_dir_all(&archive).map_err(anyhow::Error::from)?;
                }
                copy_submission(&dir, &archive).map_err(|e| {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "io", format!("{e:#}"))
                })?;
                game.submit_creation(&req.team, req.phase, &archive).inspect_err(|_| {
                    let _ = std::fs::remove_dir_all(&archive);
                })?
            }
            (None, Some(det)) => game.submit_detector(&req.team, req.phase, det.spec()?)?,
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "malformed",
                    "give exactly one of `dir` (creation) or `detector` (detection)",
                ))
            }
        };
        store.persist(game)?;
        drop(inner);
        self.set_progress(&job.id, Progress::Queued);
        spawn_evaluation(self.clone(), job.clone());
        Ok(job)
    }
}

fn spawn_evaluation(state: Arc<AppState>, job: Job) {
    tokio::spawn(async move {
        state.set_progress(&job.id, Progress::Running);
        if !state.eval_delay.is_zero() {
            tokio::time::sleep(state.eval_delay).await;
        }
        let env = state.lock().game.env().clone();
        let worker_job = job.clone();
        let outcome = tokio::task::spawn_blocking(move || worker_job.evaluate(&env))
            .await
            .unwrap_or_else(|e| Err(dfgc_core::Error::State(format!("evaluation task failed: {e}"))));
        let mut inner = state.lock();
        let Inner { game, store } = &mut *inner;
        let committed = game.commit(&job, outcome).map_err(anyhow::Error::from);
        match committed.and_then(|rec| store.persist(game).map(|()| rec)) {
            Ok(rec) => {
                let p = if rec.status == SubmissionStatus::Done {
                    Progress::Done
                } else {
                    Progress::Rejected
                };
                drop(inner);
                state.set_progress(&job.id, p);
            }
            Err(e) => eprintln!("failed to record the result of {}: {e:#}", job.id),
        }
    });
}

async fn post_submission(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<SubmissionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed", e.body_text()))?;
    let st = state.clone();
    let job = tokio::task::spawn_blocking(move || st.submit(req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "id": job.id, "phase": job.phase, "status": Progress::Queued })),
    ))
}

async fn get_submission(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SubmissionView>> {
    let rec = state
        .lock()
        .game
        .state()
        .submissions
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no submission {id}")))?;
    Ok(Json(SubmissionView {
        id,
        status: state.progress_of(&rec),
        record: rec,
    }))
}

async fn get_leaderboard(State(state): State<Arc<AppState>>, UrlPath(phase): UrlPath<String>) -> ApiResult<Json<LeaderboardView>> {
    let phase: PhaseId = phase
        .parse()
        .map_err(|e: dfgc_core::Error| ApiError::new(StatusCode::BAD_REQUEST, "malformed", e.to_string()))?;
    let inner = state.lock();
    let lb = inner
        .game
        .state()
        .leaderboard(phase)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("phase {phase} has not started")))?;
    Ok(Json(LeaderboardView {
        phase,
        frozen: lb.frozen,
        entries: lb.ranking(),
    }))
}

async fn post_advance(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    tokio::task::spawn_blocking(move || -> ApiResult<Json<serde_json::Value>> {
        let mut inner = state.lock();
        let Inner { game, store } = &mut *inner;
        let to = game.advance_phase()?;
        store.persist(game)?;
        Ok(Json(json!({ "phase": to })))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn get_rankings(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    tokio::task::spawn_blocking(move || -> ApiResult<Json<serde_json::Value>> {
        let mut inner = state.lock();
        let Inner { game, store } = &mut *inner;
        if game.phase() != GamePhase::Final {
            return Err(dfgc_core::Error::State(format!("the game is still in {}", game.phase())).into());
        }
        let r = game.final_rankings()?;
        store.persist(game)?;
        Ok(Json(serde_json::to_value(r).map_err(anyhow::Error::from)?))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn get_state(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let inner = state.lock();
    let s = inner.game.state();
    Json(json!({ "phase": s.phase, "tick": s.tick, "submissions": s.submissions.len() }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/submissions", post(post_submission))
        .route("/v1/submissions/{id}", get(get_submission))
        .route("/v1/leaderboard/{phase}", get(get_leaderboard))
        .route("/v1/rankings", get(get_rankings))
        .route("/v1/state", get(get_state))
        .route("/v1/admin/advance", post(post_advance))
        .with_state(state)
}

/// Bind, print `listening on ADDR` to stdout, and serve until killed.
pub async fn serve(root: &Path, bind: &str, eval_delay: Duration) -> Result<()> {
    let state = AppState::open(root, eval_delay)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    println!("listening on {}", listener.local_addr()?);
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
