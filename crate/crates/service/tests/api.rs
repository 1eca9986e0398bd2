use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use proofread_core::cnn::{save_checkpoint, Checkpoint, CnnArch, CnnWeights};
use proofread_core::correct::{rank_dataset, Decision};
use proofread_core::synth::{synth_dataset, SynthSpec};
use proofread_core::{
    load_dataset, save_labels, Dataset, EngineConfig, FloatMap, LabelMap, Section,
};
use proofread_service::{router, AppState, Session, SessionError};
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_config() -> EngineConfig {
    EngineConfig {
        patch_size: 21,
        n_merge_candidates: 6,
        min_segment_area: 150,
        ..EngineConfig::default()
    }
}

fn arch() -> CnnArch {
    CnnArch {
        input_size: 21,
        conv_filters: vec![4, 4],
        dense_units: 8,
        ..CnnArch::default()
    }
}

/// A corrupted two-section dataset and an untrained checkpoint on disk.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let spec = SynthSpec {
        width: 96,
        height: 80,
        n_cells: 6,
        seed: 31,
        ..SynthSpec::default()
    };
    let (ds, _) = synth_dataset("svc", &spec, 2, 2, 1).unwrap();
    let manifest = save_labels(&ds, dir.join("data")).unwrap();
    let ckpt = Checkpoint::from_weights(CnnWeights::init(arch(), 3).unwrap(), 3);
    let ckpt_path = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &ckpt_path).unwrap();
    (manifest, ckpt_path)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn open(app: &Router, manifest: &Path, ckpt: &Path, p_t: f64) -> String {
    let (status, body) = call(
        app,
        "POST",
        "/api/sessions",
        Some(json!({
            "dataset": manifest,
            "checkpoint": ckpt,
            "seed": 5,
            "p_t": p_t,
            "config": small_config(),
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

fn decode_png(b64: &str) -> (u32, u32) {
    let bytes = B64.decode(b64).unwrap();
    let img = image::load_from_memory(&bytes).unwrap();
    (img.width(), img.height())
}

#[tokio::test]
async fn next_is_idempotent_and_views_share_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, ckpt) = fixture(dir.path());
    let app = router(AppState::new());
    let id = open(&app, &manifest, &ckpt, 0.95).await;
    let uri = format!("/api/sessions/{id}/next");
    let (s1, a) = call(&app, "GET", &uri, None).await;
    let (_, b) = call(&app, "GET", &uri, None).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(a["done"], false);
    assert_eq!(a["candidate_id"], b["candidate_id"]);
    assert_eq!(a["views"], b["views"]);
    let dims: Vec<_> = ["outline", "solid", "plain"]
        .iter()
        .map(|k| decode_png(a["views"][k].as_str().unwrap()))
        .collect();
    assert!(dims.iter().all(|d| *d == dims[0]));
    assert_eq!(dims[0].0 % 2, 0);
    let meta: Vec<&str> = a.as_object().unwrap().keys().map(String::as_str).collect();
    assert!(!meta
        .iter()
        .any(|k| k.contains("current") || k.contains("proposed")));
}

#[tokio::test]
async fn queue_filters_merges_but_keeps_every_split() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, ckpt) = fixture(dir.path());
    let ds = load_dataset(&manifest).unwrap();
    let weights = proofread_core::cnn::load_checkpoint(&ckpt).unwrap().weights;
    let cfg = EngineConfig {
        rng_seed: 5,
        ..small_config()
    };
    let rankings = rank_dataset(&ds, &weights, &cfg).unwrap();
    assert!(rankings.merges.iter().all(|m| m.score < 0.95));

    let app = router(AppState::new());
    let id = open(&app, &manifest, &ckpt, 0.95).await;
    let mut seen = Vec::new();
    loop {
        let (_, next) = call(&app, "GET", &format!("/api/sessions/{id}/next"), None).await;
        if next["done"] == true {
            break;
        }
        seen.push(next["type"].as_str().unwrap().to_string());
        let (status, _) = call(
            &app,
            "POST",
            &format!("/api/sessions/{id}/decision"),
            Some(json!({ "candidate_id": next["candidate_id"], "decision": "reject" })),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
    assert_eq!(seen.len(), rankings.splits.len());
    assert!(seen.iter().all(|t| t == "split"));
    let (_, stats) = call(&app, "GET", &format!("/api/sessions/{id}/stats"), None).await;
    assert_eq!(stats["events"].as_array().unwrap().len(), seen.len());
    assert_eq!(stats["accepted"], 0);
    let trail = stats["vi_trail"].as_array().unwrap();
    assert_eq!(trail.len(), seen.len() + 1);
    assert!(trail.iter().all(|v| v == &trail[0]));
}

#[tokio::test]
async fn merges_come_first_when_they_pass_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, ckpt) = fixture(dir.path());
    let ds = load_dataset(&manifest).unwrap();
    let weights = proofread_core::cnn::load_checkpoint(&ckpt).unwrap().weights;
    let cfg = EngineConfig {
        rng_seed: 5,
        ..small_config()
    };
    let rankings = rank_dataset(&ds, &weights, &cfg).unwrap();
    let top = &rankings.merges[0];

    let app = router(AppState::new());
    let id = open(&app, &manifest, &ckpt, 0.01).await;
    let (_, next) = call(&app, "GET", &format!("/api/sessions/{id}/next"), None).await;
    assert_eq!(next["type"], "merge");
    assert_eq!(next["section"], top.section);
    assert_eq!(next["score"].as_f64().unwrap(), top.score);
}

#[tokio::test]
async fn accept_split_removes_label_and_stale_ids_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, ckpt) = fixture(dir.path());
    let state = AppState::new();
    let app = router(state.clone());
    let id = open(&app, &manifest, &ckpt, 0.95).await;
    let (_, next) = call(&app, "GET", &format!("/api/sessions/{id}/next"), None).await;
    let cid = next["candidate_id"].as_u64().unwrap();
    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/decision"),
        Some(json!({ "candidate_id": cid + 7, "decision": "accept" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "StaleCursor");

    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/decision"),
        Some(json!({ "candidate_id": cid, "decision": "accept" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let ids: Vec<u32> = body["event"]["ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as u32)
        .collect();
    let section = body["event"]["section"].as_u64().unwrap() as usize;
    let shared = state.get(&id).unwrap();
    let s = shared.lock().unwrap();
    let labels = &s.dataset().sections[section].labels;
    assert!(labels.contains_label(ids[0]));
    assert!(!labels.contains_label(ids[1]));
}

#[tokio::test]
async fn panel_clicks_map_to_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, ckpt) = fixture(dir.path());
    let app = router(AppState::new());
    let id = open(&app, &manifest, &ckpt, 0.95).await;
    let mut decisions = Vec::new();
    for panel in ["left", "right", "left", "right"] {
        let (_, next) = call(&app, "GET", &format!("/api/sessions/{id}/next"), None).await;
        if next["done"] == true {
            break;
        }
        let (_, body) = call(
            &app,
            "POST",
            &format!("/api/sessions/{id}/decision"),
            Some(json!({ "candidate_id": next["candidate_id"], "panel": panel })),
        )
        .await;
        decisions.push(body["event"]["decision"].as_str().unwrap().to_string());
    }
    assert!(!decisions.is_empty());
    assert!(decisions.iter().all(|d| d == "accept" || d == "reject"));

    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/decision"),
        Some(json!({ "candidate_id": 0, "panel": "left", "decision": "skip" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = router(AppState::new());
    for (method, uri) in [
        ("GET", "/api/sessions/nope/next"),
        ("GET", "/api/sessions/nope/stats"),
        ("GET", "/api/sessions/nope/labels"),
    ] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["error"], "SessionNotFound");
    }
    let (status, _) = call(
        &app,
        "POST",
        "/api/sessions/nope/decision",
        Some(json!({ "candidate_id": 0, "decision": "accept" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn missing_dataset_is_reported() {
    let app = router(AppState::new());
    let (status, body) = call(
        &app,
        "POST",
        "/api/sessions",
        Some(json!({ "dataset": "/nonexistent", "checkpoint": "/nonexistent.ckpt", "seed": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "MissingFile");
}

#[test]
fn perfect_segmentation_has_no_candidates() {
    let gray = FloatMap::filled(64, 64, 0.75);
    let section = Section::new(0, gray.clone(), gray, LabelMap::filled(64, 64, 1), None).unwrap();
    let ds = Dataset::new("one", vec![section]).unwrap();
    let w = Arc::new(CnnWeights::init(arch(), 1).unwrap());
    let cfg = EngineConfig {
        min_segment_area: 1_000_000,
        ..small_config()
    };
    assert!(matches!(
        Session::create(ds, w, cfg, None),
        Err(SessionError::NoCandidates)
    ));
}

#[test]
fn time_limit_ends_session() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = fixture(dir.path());
    let ds = load_dataset(&manifest).unwrap();
    let w = Arc::new(CnnWeights::init(arch(), 1).unwrap());
    let mut s = Session::create(ds, w, small_config(), Some(1e-9)).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(2));
    assert!(s.next().unwrap().is_none());
    assert_eq!(s.progress().remaining, 0);
    assert!(matches!(
        s.decide(0, proofread_service::Choice::Decision(Decision::Accept)),
        Err(SessionError::StaleCursor { .. })
    ));
    assert!(Session::create(
        load_dataset(&manifest).unwrap(),
        Arc::new(CnnWeights::init(arch(), 1).unwrap()),
        small_config(),
        Some(-1.0)
    )
    .is_err());
}
