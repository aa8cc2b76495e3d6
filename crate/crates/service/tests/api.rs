use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use errslice_core::io::write_dataset;
use errslice_core::model::{Dataset, Record};
use errslice_core::store::RunStore;
use errslice_service::{replay, router, AppState, RUN_ID_HEADER};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/reviews200.jsonl")
}

struct Reply {
    status: StatusCode,
    run_id: Option<String>,
    body: Value,
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let run_id = resp
        .headers()
        .get(RUN_ID_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Reply { status, run_id, body }
}

async fn post(state: &Arc<AppState>, uri: &str, body: Value) -> Reply {
    call(state, Method::POST, uri, Some(body)).await
}

async fn get(state: &Arc<AppState>, uri: &str) -> Reply {
    call(state, Method::GET, uri, None).await
}

fn new_state(dir: &Path) -> Arc<AppState> {
    AppState::new(RunStore::open(dir.join("runs")).unwrap())
}

async fn open_session(state: &Arc<AppState>, path: &Path) -> String {
    let r = post(state, "/datasets", json!({ "path": path })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let name = r.body["name"].as_str().unwrap().to_string();
    let r = post(state, "/sessions", json!({ "dataset": name })).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    r.body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn every_mutating_run_replays_to_its_response() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let mut runs = Vec::new();

    let r = post(&state, "/datasets", json!({ "path": fixture() })).await;
    assert_eq!(r.body["n"], 200);
    runs.push((r.run_id.unwrap(), r.body));
    let r = post(&state, "/sessions", json!({ "dataset": "reviews200" })).await;
    let sid = r.body["session_id"].as_str().unwrap().to_string();
    runs.push((r.run_id.unwrap(), r.body));
    let r = post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.8 })).await;
    assert_eq!(r.body["slice_size"], 40);
    runs.push((r.run_id.unwrap(), r.body));
    let r = post(&state, &format!("/sessions/{sid}/cluster"), json!({ "seed": 7 })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["clustering_id"].as_str(), r.run_id.as_deref());
    runs.push((r.run_id.unwrap(), r.body));
    let r = post(&state, &format!("/sessions/{sid}/label"), json!({ "client": "stub" })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert!(r.body.as_object().unwrap().values().all(|e| e["label"].is_string()));
    runs.push((r.run_id.unwrap(), r.body));

    let kinds: Vec<String> = runs
        .iter()
        .map(|(id, _)| state.store().load(id).unwrap().kind)
        .collect();
    assert_eq!(kinds, ["dataset", "session", "slice", "cluster", "label"]);
    for (id, body) in &runs {
        let artifact = state.store().load(id).unwrap();
        assert_eq!(artifact.response.as_ref(), Some(body), "{id} persisted payload");
        assert_eq!(&replay(&artifact).unwrap(), body, "{id} replay");
        let fetched = get(&state, &format!("/runs/{id}")).await;
        assert_eq!(fetched.body["response"], *body);
    }
}

#[tokio::test]
async fn quantile_errors_and_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    for q in [1.0, -0.1, 1.5] {
        let r = post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": q })).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(r.body["code"], "invalid_quantile");
        assert!(r.run_id.is_none());
    }
    let r = post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.99 })).await;
    assert_eq!(r.body["slice_size"], 2);
    assert_eq!(r.body["members_preview"].as_array().unwrap().len(), 2);
    let r = post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.0 })).await;
    assert_eq!(r.body["slice_size"], 200);
    assert_eq!(r.body["members_preview"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn cluster_requires_slice_and_picks_default_k() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    let r = post(&state, &format!("/sessions/{sid}/cluster"), json!({})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["code"], "no_slice");

    post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.75 })).await;
    let r = post(&state, &format!("/sessions/{sid}/cluster"), json!({})).await;
    assert_eq!(r.body["k"], 5);
    let sizes: Vec<u64> = serde_json::from_value(r.body["sizes"].clone()).unwrap();
    assert_eq!(sizes.iter().sum::<u64>(), 50);

    let r = post(&state, &format!("/sessions/{sid}/cluster"), json!({ "k": 51 })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.run_id.is_none());
}

#[tokio::test]
async fn table_tokens_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    let r = get(&state, &format!("/sessions/{sid}/tokens")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.9 })).await;
    post(&state, &format!("/sessions/{sid}/cluster"), json!({ "k": 2 })).await;
    let r = get(&state, &format!("/sessions/{sid}/table?sort=loss&limit=30")).await;
    let rows = r.body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 30);
    let losses: Vec<f64> = rows.iter().map(|r| r["loss"].as_f64().unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(rows.iter().filter(|r| !r["cluster"].is_null()).count(), 20);

    let r = get(&state, &format!("/sessions/{sid}/tokens?top=5")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.body["rows"].as_array().unwrap().len() <= 5);

    let r = get(&state, "/sessions/session-999999/table").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["code"], "session_not_found");
    let r = get(&state, &format!("/sessions/{sid}/table?limit=-3")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post(&state, "/datasets", json!({ "nope": 1 })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["code"], "invalid_body");
    let r = post(&state, "/datasets", json!({ "path": tmp.path().join("missing.jsonl") })).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["code"], "dataset_not_found");
    let r = get(&state, "/runs/run-424242").await;
    assert_eq!(r.body["code"], "run_not_found");
    let r = get(&state, "/healthz").await;
    assert_eq!(r.body["status"], "ok");
}

fn big_dataset(n: usize) -> Dataset {
    let records = (0..n)
        .map(|i| {
            let a = i as f64 * 0.37;
            Record {
                id: format!("p{i}"),
                text: format!("point {}", i % 17),
                label: i % 2,
                prediction: (i / 3) % 2,
                loss: ((i * 7919) % 10007) as f64 / 10007.0,
                embedding: vec![a.sin(), a.cos(), (i % 13) as f64 / 13.0],
            }
        })
        .collect();
    Dataset { name: "big".into(), num_classes: 2, embedding_dim: 3, records }
}

#[tokio::test]
async fn projection_respects_point_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("big.jsonl");
    write_dataset(&path, &big_dataset(6000)).unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &path).await;
    post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.9 })).await;
    post(&state, &format!("/sessions/{sid}/cluster"), json!({ "k": 4, "restarts": 2 })).await;

    let r = get(&state, &format!("/sessions/{sid}/projection")).await;
    assert_eq!(r.body["total"], 6000);
    assert_eq!(r.body["cap"], 5000);
    let points = r.body["points"].as_array().unwrap();
    assert_eq!(points.len(), 5000);
    // every cluster and the outside group stay visible
    for c in 0..4 {
        assert!(points.iter().any(|p| p["cluster"] == c));
    }
    assert!(points.iter().any(|p| p["in_slice"] == false));

    let r = get(&state, &format!("/sessions/{sid}/projection?cap=20000")).await;
    assert_eq!(r.body["points"].as_array().unwrap().len(), 5000);
    let r = get(&state, &format!("/sessions/{sid}/projection?cap=300")).await;
    assert_eq!(r.body["points"].as_array().unwrap().len(), 300);
    let again = get(&state, &format!("/sessions/{sid}/projection?cap=300")).await;
    assert_eq!(r.body, again.body);
}

#[tokio::test]
async fn projection_below_cap_returns_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    let r = get(&state, &format!("/sessions/{sid}/projection")).await;
    let points = r.body["points"].as_array().unwrap();
    assert_eq!(points.len(), 200);
    assert!(points.iter().all(|p| p["in_slice"] == false && p["cluster"].is_null()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    post(&state, "/datasets", json!({ "path": fixture() })).await;
    let mut handles = Vec::new();
    for i in 0..8u64 {
        let st = state.clone();
        handles.push(tokio::spawn(async move {
            let r = post(&st, "/sessions", json!({ "dataset": "reviews200" })).await;
            let sid = r.body["session_id"].as_str().unwrap().to_string();
            let q = 0.5 + 0.05 * i as f64;
            let s = post(&st, &format!("/sessions/{sid}/slice"), json!({ "q": q })).await;
            let c = post(&st, &format!("/sessions/{sid}/cluster"), json!({ "k": 2, "seed": i })).await;
            (sid, q, s.body["slice_size"].as_u64().unwrap(), c.status, c.run_id.unwrap())
        }));
    }
    let mut sids = Vec::new();
    let mut runs = Vec::new();
    for h in handles {
        let (sid, q, size, status, run) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(size, ((1.0 - q) * 200.0_f64).round() as u64);
        sids.push(sid);
        runs.push(run);
    }
    sids.sort();
    sids.dedup();
    runs.sort();
    runs.dedup();
    assert_eq!(sids.len(), 8);
    assert_eq!(runs.len(), 8);
    assert_eq!(state.session_count(), 8);
}

#[tokio::test]
async fn rehydrates_sessions_from_store() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.9 })).await;
    let c = post(&state, &format!("/sessions/{sid}/cluster"), json!({ "k": 3, "seed": 1 })).await;
    let table = get(&state, &format!("/sessions/{sid}/table?limit=200")).await;
    let labels = post(&state, &format!("/sessions/{sid}/label"), json!({})).await;

    let restored = new_state(tmp.path());
    restored.rehydrate().unwrap();
    assert_eq!(restored.session_count(), 1);
    let t2 = get(&restored, &format!("/sessions/{sid}/table?limit=200")).await;
    assert_eq!(table.body, t2.body);
    let l2 = post(&restored, &format!("/sessions/{sid}/label"), json!({})).await;
    assert_eq!(labels.body, l2.body);
    assert!(l2.run_id.unwrap() > c.run_id.unwrap());
}

#[tokio::test]
async fn label_needs_clustering_and_remote_needs_config() {
    let tmp = tempfile::tempdir().unwrap();
    let state = new_state(tmp.path());
    let sid = open_session(&state, &fixture()).await;
    post(&state, &format!("/sessions/{sid}/slice"), json!({ "q": 0.9 })).await;
    let r = post(&state, &format!("/sessions/{sid}/label"), json!({})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    post(&state, &format!("/sessions/{sid}/cluster"), json!({ "k": 2 })).await;
    if std::env::var("ERRSLICE_LLM_ENDPOINT").is_err() {
        let r = post(&state, &format!("/sessions/{sid}/label"), json!({ "client": "remote" })).await;
        assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(r.body["code"], "labeler_unavailable");
    }
    let r = post(&state, &format!("/sessions/{sid}/label"), json!({ "client": "carrier-pigeon" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}
