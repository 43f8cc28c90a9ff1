//! Read-only HTTP API over a loaded analysis bundle.
//!
//! Endpoints (all JSON):
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/bundle` | [`BundleInfo`] |
//! | GET | `/api/layout` | env layout for rendering |
//! | GET | `/api/trajectories?offset=&limit=` | [`TrajectoryPage`]; paging past the end yields no items |
//! | GET | `/api/trajectories/{id}?metric=` | [`TrajectoryDetail`], metric defaults to `vgoal` |
//! | GET | `/api/rankings/{metric}` | ranking report |
//! | POST | `/api/counterfactual` | [`CounterfactualRequest`] → [`CounterfactualResponse`] |
//!
//! Every response carries the bundle hash in `x-bundle-hash`. A request that
//! sends that header with a different value gets 409. Unknown trajectory ids
//! give 404 and invalid steps, actions or metrics give 422.

mod api;
mod bundle;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{
    router, ApiError, BundleInfo, CounterfactualRequest, CounterfactualResponse, ErrorBody,
    TrajectoryDetail, TrajectoryPage, TrajectorySummary, BUNDLE_HASH_HEADER, DEFAULT_PAGE_LIMIT,
    MAX_PAGE_LIMIT,
};
pub use bundle::{Bundle, CACHE_CAPACITY};

/// Serves `bundle` until the process is stopped.
pub async fn serve(bundle: Bundle, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(bundle))).await
}
