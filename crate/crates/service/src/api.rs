use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use trajex_core::counterfactual::{CounterfactualRollout, Outcome};
use trajex_core::envsim::{ActionId, Layout, TerminalKind};
use trajex_core::importance::{ImportanceBreakdown, RadicalKind};
use trajex_core::ranking::RankingReport;
use trajex_core::trajstore::Trajectory;
use trajex_core::Error as CoreError;

use crate::bundle::Bundle;

pub const BUNDLE_HASH_HEADER: &str = "x-bundle-hash";
pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("bundle hash mismatch: serving {serving}, request expects {requested}")]
    BundleMismatch { serving: String, requested: String },
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BundleMismatch { .. } => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::Unprocessable(_) => "invalid_request",
            ApiError::BundleMismatch { .. } => "bundle_mismatch",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnknownTrajectory(_) => ApiError::NotFound(e.to_string()),
            CoreError::InvalidRequest(msg) => ApiError::Unprocessable(msg),
            CoreError::InvalidAction { .. } | CoreError::UndefinedKl { .. } | CoreError::Config(_) => {
                ApiError::Unprocessable(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code().into(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<Bundle>;

#[derive(Debug, Serialize, Deserialize)]
pub struct BundleInfo {
    pub bundle_hash: String,
    pub env: String,
    pub config_hash: String,
    pub qtable_hash: String,
    pub trajectory_count: usize,
    pub metrics: Vec<String>,
    pub seed: u64,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub id: String,
    pub checkpoint_fraction: f64,
    pub length: usize,
    pub total_reward: f64,
    pub terminal: TerminalKind,
    /// I_τ under each standard metric.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryPage {
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub items: Vec<TrajectorySummary>,
}

#[derive(Debug, Deserialize)]
pub struct DetailQuery {
    pub metric: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryDetail {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub breakdown: ImportanceBreakdown,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CounterfactualRequest {
    pub trajectory_id: String,
    pub step: usize,
    pub action: ActionId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CounterfactualResponse {
    pub original: Outcome,
    pub rollout: CounterfactualRollout,
    pub length_delta: i64,
    pub reward_delta: f64,
}

pub fn router(bundle: Arc<Bundle>) -> Router {
    Router::new()
        .route("/api/bundle", get(bundle_info))
        .route("/api/layout", get(layout))
        .route("/api/trajectories", get(list_trajectories))
        .route("/api/trajectories/{id}", get(trajectory_detail))
        .route("/api/rankings/{metric}", get(ranking))
        .route("/api/counterfactual", post(counterfactual))
        .layer(middleware::from_fn_with_state(bundle.clone(), bundle_hash_guard))
        .with_state(bundle)
}

/// Rejects requests pinned to another bundle and stamps the bundle hash on
/// every response.
async fn bundle_hash_guard(State(bundle): State<Shared>, req: Request, next: Next) -> Response {
    let requested = req
        .headers()
        .get(BUNDLE_HASH_HEADER)
        .map(|v| v.to_str().unwrap_or("<non-ascii>").to_string());
    let mut resp = match requested {
        Some(r) if r != bundle.hash() => ApiError::BundleMismatch {
            serving: bundle.hash().to_string(),
            requested: r,
        }
        .into_response(),
        _ => next.run(req).await,
    };
    let value = HeaderValue::from_str(bundle.hash()).expect("hex hash is a valid header value");
    resp.headers_mut().insert(BUNDLE_HASH_HEADER, value);
    resp
}

async fn bundle_info(State(b): State<Shared>) -> Json<BundleInfo> {
    Json(BundleInfo {
        bundle_hash: b.hash().to_string(),
        env: b.dataset().env.clone(),
        config_hash: b.config_hash().to_string(),
        qtable_hash: b.qtable().content_hash(),
        trajectory_count: b.dataset().trajectories.len(),
        metrics: b.metrics().map(str::to_string).collect(),
        seed: b.seed(),
        temperature: b.temperature(),
    })
}

async fn layout(State(b): State<Shared>) -> Json<Layout> {
    Json(b.env().layout())
}

async fn list_trajectories(State(b): State<Shared>, Query(q): Query<PageQuery>) -> ApiResult<TrajectoryPage> {
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::Unprocessable(format!("limit must be in 1..={MAX_PAGE_LIMIT}")));
    }
    let all = &b.dataset().trajectories;
    let items = all
        .iter()
        .enumerate()
        .skip(offset)
        .take(limit)
        .map(|(i, t)| TrajectorySummary {
            index: i,
            id: t.id.clone(),
            checkpoint_fraction: t.checkpoint_fraction,
            length: t.length,
            total_reward: t.total_reward,
            terminal: b.env().terminal_kind(&t.transitions),
            scores: b
                .metrics()
                .filter_map(|m| b.score(m, i).map(|s| (m.to_string(), s)))
                .collect(),
        })
        .collect();
    Ok(Json(TrajectoryPage {
        offset,
        limit,
        total: all.len(),
        items,
    }))
}

fn parse_metric(name: &str) -> Result<RadicalKind, ApiError> {
    match RadicalKind::parse(name, None, false) {
        Ok(kind) => Ok(kind),
        Err(e) => Err(ApiError::Unprocessable(e.to_string())),
    }
}

async fn trajectory_detail(
    State(b): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
) -> ApiResult<TrajectoryDetail> {
    let kind = parse_metric(q.metric.as_deref().unwrap_or("vgoal"))?;
    let index = b.dataset().index_of(&id)?;
    let trajectory = b.dataset().trajectories[index].clone();
    let breakdown = b.breakdown(index, &kind)?;
    Ok(Json(TrajectoryDetail {
        outcome: Outcome::of(b.env(), &trajectory),
        trajectory,
        breakdown,
    }))
}

async fn ranking(State(b): State<Shared>, Path(metric): Path<String>) -> ApiResult<RankingReport> {
    let kind = parse_metric(&metric)?;
    b.ranking(kind.name())
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("no ranking for metric {metric}")))
}

async fn counterfactual(
    State(b): State<Shared>,
    Json(req): Json<CounterfactualRequest>,
) -> ApiResult<CounterfactualResponse> {
    let original = Outcome::of(b.env(), b.dataset().get(&req.trajectory_id)?);
    let bundle = b.clone();
    let rollout = tokio::task::spawn_blocking(move || {
        bundle.counterfactual(&req.trajectory_id, req.step, req.action)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let rollout = (*rollout).clone();
    Ok(Json(CounterfactualResponse {
        length_delta: rollout.outcome.length as i64 - original.length as i64,
        reward_delta: rollout.outcome.total_reward - original.total_reward,
        original,
        rollout,
    }))
}
