use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trajex_core::agent::train;
use trajex_core::config::RunConfig;
use trajex_core::counterfactual::{self, generate};
use trajex_core::envsim::Env;
use trajex_core::trajstore::{collect, RolloutMode};
use trajex_service::{router, Bundle, BUNDLE_HASH_HEADER};

const SEED: u64 = 11;

fn bundle(preset: &str) -> Bundle {
    let mut cfg = RunConfig::for_preset(preset).unwrap();
    cfg.train.episodes = 400;
    cfg.collect.episodes_per_checkpoint = 4;
    let env = Env::from_config(&cfg.env).unwrap();
    let hash = cfg.env.hash();
    let out = train(&env, &cfg.train, &hash, SEED).unwrap();
    let ds = collect(
        &env,
        &out.checkpoints,
        &out.qtable,
        cfg.collect.episodes_per_checkpoint,
        RolloutMode::from_epsilon(cfg.collect.epsilon),
        SEED,
    )
    .unwrap();
    Bundle::new(env, &hash, out.qtable, ds, 1.0, 5, SEED).unwrap()
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Option<String>, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let hash = resp
        .headers()
        .get(BUNDLE_HASH_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, hash, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_cf(body: Value) -> Request<Body> {
    Request::post("/api/counterfactual")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn every_response_carries_the_bundle_hash() {
    let b = Arc::new(bundle("grid3"));
    let app = router(b.clone());
    for uri in ["/api/bundle", "/api/layout", "/api/trajectories", "/api/rankings/nope"] {
        let (_, hash, _) = call(&app, get(uri)).await;
        assert_eq!(hash.as_deref(), Some(b.hash()), "{uri}");
    }
    let (status, _, body) = call(&app, get("/api/bundle")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["bundle_hash"], b.hash());
    assert_eq!(body["trajectory_count"], 20);
}

#[tokio::test]
async fn paging() {
    let app = router(Arc::new(bundle("grid3")));
    let (status, _, body) = call(&app, get("/api/trajectories?offset=18&limit=5")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 20);
    assert_eq!(body["items"].as_array().unwrap().len(), 2);
    assert_eq!(body["items"][0]["index"], 18);
    assert!(body["items"][0]["scores"]["vgoal"].is_number());

    let (status, _, body) = call(&app, get("/api/trajectories?offset=500")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["items"].as_array().unwrap().is_empty());

    let (status, _, _) = call(&app, get("/api/trajectories?limit=0")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn detail_and_ranking_match_the_bundle() {
    let b = Arc::new(bundle("grid3"));
    let app = router(b.clone());
    let id = b.dataset().trajectories[3].id.clone();
    let (status, _, body) = call(&app, get(&format!("/api/trajectories/{id}?metric=classic"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["trajectory"]["id"], id.as_str());
    let score = b.score("classic", 3).unwrap();
    assert_eq!(body["breakdown"]["i_tau"].as_f64().unwrap().to_bits(), score.to_bits());

    let (status, _, body) = call(&app, get("/api/rankings/vgoal")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["selected_id"], b.ranking("vgoal").unwrap().selected_id.as_str());

    let (status, _, _) = call(&app, get("/api/trajectories/missing")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&app, get("/api/rankings/bogus")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = call(&app, get(&format!("/api/trajectories/{id}?metric=kl"))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn counterfactual_errors() {
    let b = Arc::new(bundle("grid3"));
    let app = router(b.clone());
    let t = &b.dataset().trajectories[0];
    let original = t.transitions[0].action;

    let (status, _, body) = call(&app, post_cf(json!({"trajectory_id": t.id, "step": 0, "action": original}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["message"], "action equals original");

    let (status, _, _) = call(&app, post_cf(json!({"trajectory_id": t.id, "step": t.length, "action": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = call(&app, post_cf(json!({"trajectory_id": t.id, "step": 0, "action": 4}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = call(&app, post_cf(json!({"trajectory_id": "nope", "step": 0, "action": 0}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stale_bundle_hash_conflicts() {
    let b = Arc::new(bundle("grid3"));
    let app = router(b.clone());
    let req = Request::get("/api/bundle")
        .header(BUNDLE_HASH_HEADER, "0000000000000000")
        .body(Body::empty())
        .unwrap();
    let (status, hash, body) = call(&app, req).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(hash.as_deref(), Some(b.hash()));
    assert_eq!(body["error"], "bundle_mismatch");

    let req = Request::get("/api/bundle")
        .header(BUNDLE_HASH_HEADER, b.hash())
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::OK);
}

#[tokio::test]
async fn counterfactuals_match_the_batch_generator() {
    let b = Arc::new(bundle("grid3"));
    let app = router(b.clone());
    let target = b.dataset().trajectories[5].clone();
    let set = generate(
        b.env(),
        b.qtable(),
        b.config_hash(),
        &target,
        None,
        counterfactual::rollout_seed(SEED),
    )
    .unwrap();
    for r in &set.rollouts {
        let req = json!({"trajectory_id": target.id, "step": r.deviation_step, "action": r.forced_action});
        // twice, so the second answer comes from the cache
        for _ in 0..2 {
            let (status, _, body) = call(&app, post_cf(req.clone())).await;
            assert_eq!(status, StatusCode::OK);
            let served: trajex_core::counterfactual::CounterfactualRollout =
                serde_json::from_value(body["rollout"].clone()).unwrap();
            assert_eq!(&served, r);
            assert_eq!(
                body["length_delta"].as_i64().unwrap(),
                r.outcome.length as i64 - target.length as i64
            );
        }
    }
    assert_eq!(b.cached_counterfactuals(), set.rollouts.len().min(trajex_service::CACHE_CAPACITY));
}

#[tokio::test]
async fn lander_layout() {
    let app = router(Arc::new(bundle("lander")));
    let (status, _, body) = call(&app, get("/api/layout")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["kind"], "lander");
    assert_eq!(body["altitude_edges"].as_array().unwrap().len(), 41);
}
