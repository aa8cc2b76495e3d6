//! HTTP/JSON service over the error-slice pipeline.
//!
//! Sessions hold a dataset plus the current slice and clustering. Every
//! mutating request is persisted to the [`RunStore`] with a config snapshot
//! and its response payload; the run id is returned in the `x-run-id`
//! header and [`replay`] recomputes the payload from the snapshot.

mod error;
mod ops;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{Any, CorsLayer};
use tracing::{info, warn};

use errslice_core::analytics::{pca_project, Projection, VIEW_POINT_CAP};
use errslice_core::io::load_dataset;
use errslice_core::labeling::{label_each, LabelingClient, PromptSpec, RemoteClient, RemoteConfig, StubClient};
use errslice_core::model::{Clustering, Dataset, EvalSlice};
use errslice_core::store::{timestamp_now, RunArtifact, RunStore};

pub use error::{ApiError, ErrorBody};
pub use ops::{ClusterParams, LabelEntry, DEFAULT_TABLE_LIMIT, DEFAULT_TOKENS_TOP, PREVIEW_LEN};

pub const RUN_ID_HEADER: &str = "x-run-id";
const RUN_PREFIX: &str = "run";
const SESSION_PREFIX: &str = "session";

/// A dataset loaded from disk, with its projection computed on first use.
pub struct LoadedDataset {
    pub path: PathBuf,
    pub data: Dataset,
    projection: OnceLock<Result<Projection, String>>,
}

impl LoadedDataset {
    fn new(path: PathBuf, data: Dataset) -> Self {
        LoadedDataset {
            path,
            data,
            projection: OnceLock::new(),
        }
    }

    fn projection(&self) -> Result<&Projection, ApiError> {
        self.projection
            .get_or_init(|| pca_project(&self.data.embeddings_of(&(0..self.data.len()).collect::<Vec<_>>())).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| ApiError::unprocessable("projection_error", e.clone()))
    }
}

pub struct Session {
    pub id: String,
    pub dataset: Arc<LoadedDataset>,
    pub q: Option<f64>,
    pub slice: Option<EvalSlice>,
    pub clustering: Option<Clustering>,
    pub clustering_id: Option<String>,
    pub cluster_params: Option<ClusterParams>,
    pub created_at: String,
}

pub struct AppState {
    store: RunStore,
    datasets: RwLock<HashMap<String, Arc<LoadedDataset>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(store: RunStore) -> Arc<Self> {
        Arc::new(AppState {
            store,
            datasets: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn dataset(&self, name: &str) -> Option<Arc<LoadedDataset>> {
        self.datasets.read().unwrap().get(name).cloned()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    /// Rebuilds datasets and sessions by applying stored runs in order.
    /// Runs whose dataset file can no longer be read are skipped.
    pub fn rehydrate(self: &Arc<Self>) -> Result<usize, ApiError> {
        let mut applied = 0;
        for id in self.store.list()? {
            let artifact = self.store.load(&id)?;
            match self.apply_run(&artifact) {
                Ok(()) => applied += 1,
                Err(e) => warn!(run = %id, error = %e, "skipping run during rehydration"),
            }
        }
        Ok(applied)
    }

    fn apply_run(&self, a: &RunArtifact) -> Result<(), ApiError> {
        let cfg = &a.config;
        let path = cfg["path"].as_str().map(PathBuf::from);
        let session_id = cfg["session_id"].as_str();
        match a.kind.as_str() {
            "dataset" => {
                let path = path.ok_or_else(|| ApiError::internal("dataset run without path"))?;
                self.register_dataset(&path)?;
            }
            "session" => {
                let name = cfg["dataset"].as_str().unwrap_or_default();
                let dataset = match self.dataset(name) {
                    Some(d) => d,
                    None => self.register_dataset(&path.ok_or_else(|| ApiError::internal("session run without path"))?)?,
                };
                let id = a.response.as_ref().and_then(|r| r["session_id"].as_str()).unwrap_or_default();
                self.insert_session(id.to_string(), dataset, a.created_at.clone());
            }
            "slice" | "cluster" => {
                let session = self.session(session_id.unwrap_or_default())?;
                let mut s = session.try_lock().map_err(|_| ApiError::internal("session busy"))?;
                let q = cfg["q"].as_f64().ok_or_else(|| ApiError::internal("run without q"))?;
                let (slice, _) = ops::slice_op(&s.dataset.data, q)?;
                s.q = Some(q);
                s.slice = Some(slice);
                if a.kind == "cluster" {
                    let params: ClusterParams = serde_json::from_value(cfg["cluster"].clone())
                        .map_err(|e| ApiError::internal(e.to_string()))?;
                    s.clustering = a.clusterings.first().cloned();
                    s.clustering_id = Some(a.run_id.clone());
                    s.cluster_params = Some(params);
                } else {
                    s.clustering = None;
                    s.clustering_id = None;
                    s.cluster_params = None;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn register_dataset(&self, path: &Path) -> Result<Arc<LoadedDataset>, ApiError> {
        let data = load_dataset(path)?;
        let loaded = Arc::new(LoadedDataset::new(path.to_path_buf(), data));
        self.datasets
            .write()
            .unwrap()
            .insert(loaded.data.name.clone(), loaded.clone());
        Ok(loaded)
    }

    fn insert_session(&self, id: String, dataset: Arc<LoadedDataset>, created_at: String) {
        let session = Session {
            id: id.clone(),
            dataset,
            q: None,
            slice: None,
            clustering: None,
            clustering_id: None,
            cluster_params: None,
            created_at,
        };
        self.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(session)));
    }

    /// Persists a run whose response may embed its own run id.
    fn persist<F>(&self, kind: &str, dataset: &str, q: Option<f64>, config: Value, build: F) -> Result<RunArtifact, ApiError>
    where
        F: FnOnce(&str) -> (Vec<Clustering>, std::collections::BTreeMap<usize, errslice_core::labeling::ClusterLabel>, Value),
    {
        let created_at = timestamp_now();
        let artifact = self.store.save_with(RUN_PREFIX, |run_id| {
            let (clusterings, labels, response) = build(run_id);
            RunArtifact {
                run_id: run_id.to_string(),
                kind: kind.to_string(),
                dataset: dataset.to_string(),
                q,
                clusterings,
                tuples: Vec::new(),
                labels,
                created_at,
                config,
                response: Some(response),
            }
        })?;
        Ok(artifact)
    }
}

fn session_id_for(run_id: &str) -> String {
    format!("{SESSION_PREFIX}-{}", run_id.trim_start_matches(RUN_PREFIX).trim_start_matches('-'))
}

fn with_run_id(run_id: &str, body: &Value) -> Response {
    let mut resp = Json(body).into_response();
    if let Ok(v) = HeaderValue::from_str(run_id) {
        resp.headers_mut().insert(HeaderName::from_static(RUN_ID_HEADER), v);
    }
    resp
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| {
        let status = e.status();
        ApiError::new(status, "invalid_body", e.body_text())
    })
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct DatasetRequest {
    path: String,
}

async fn post_dataset(
    State(state): State<Arc<AppState>>,
    body: Result<Json<DatasetRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json_body(body)?;
    let st = state.clone();
    let artifact = blocking(move || {
        let path = PathBuf::from(&req.path);
        let loaded = st.register_dataset(&path)?;
        let response = ops::dataset_summary(&loaded.data);
        st.persist(
            "dataset",
            &loaded.data.name,
            None,
            json!({ "path": req.path }),
            |_| (Vec::new(), Default::default(), response),
        )
    })
    .await?;
    Ok(with_run_id(&artifact.run_id, artifact.response.as_ref().expect("set")))
}

#[derive(Deserialize)]
struct SessionRequest {
    dataset: String,
}

async fn post_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json_body(body)?;
    let dataset = state
        .dataset(&req.dataset)
        .ok_or_else(|| ApiError::not_found("dataset_not_found", format!("dataset {} is not loaded", req.dataset)))?;
    let st = state.clone();
    let artifact = blocking(move || {
        let config = json!({ "dataset": dataset.data.name, "path": dataset.path.display().to_string() });
        let artifact = st.persist("session", &dataset.data.name, None, config, |run_id| {
            (Vec::new(), Default::default(), json!({ "session_id": session_id_for(run_id) }))
        })?;
        let sid = session_id_for(&artifact.run_id);
        st.insert_session(sid, dataset, artifact.created_at.clone());
        Ok(artifact)
    })
    .await?;
    Ok((StatusCode::CREATED, with_run_id(&artifact.run_id, artifact.response.as_ref().expect("set"))).into_response())
}

fn session_config(s: &Session) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("session_id".into(), json!(s.id));
    m.insert("dataset".into(), json!(s.dataset.data.name));
    m.insert("path".into(), json!(s.dataset.path.display().to_string()));
    m
}

#[derive(Deserialize)]
struct SliceRequest {
    q: f64,
}

async fn post_slice(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SliceRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let req = json_body(body)?;
    let mut s = session.clone().lock_owned().await;
    let st = state.clone();
    let (s, artifact) = blocking(move || {
        let (slice, response) = ops::slice_op(&s.dataset.data, req.q)?;
        let mut config = session_config(&s);
        config.insert("q".into(), json!(req.q));
        let artifact = st.persist("slice", &s.dataset.data.name, Some(req.q), Value::Object(config), |_| {
            (Vec::new(), Default::default(), response)
        })?;
        s.q = Some(req.q);
        s.slice = Some(slice);
        s.clustering = None;
        s.clustering_id = None;
        s.cluster_params = None;
        Ok((s, artifact))
    })
    .await?;
    drop(s);
    Ok(with_run_id(&artifact.run_id, artifact.response.as_ref().expect("set")))
}

#[derive(Deserialize, Default)]
struct ClusterRequest {
    k: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
    subcluster: Option<bool>,
}

async fn post_cluster(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ClusterRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let req = json_body(body)?;
    let params = ClusterParams {
        k: req.k,
        seed: req.seed.unwrap_or(0),
        restarts: req.restarts.unwrap_or(16),
        subcluster: req.subcluster.unwrap_or(false),
    };
    let mut s = session.clone().lock_owned().await;
    let st = state.clone();
    let (s, artifact) = blocking(move || {
        let (Some(q), Some(slice)) = (s.q, s.slice.clone()) else {
            return Err(ApiError::conflict("no_slice", "create a slice before clustering"));
        };
        let mut config = session_config(&s);
        config.insert("q".into(), json!(q));
        config.insert("cluster".into(), serde_json::to_value(&params).expect("serializable"));
        let (clustering, response) = ops::cluster_op(&s.dataset.data, &slice, &params, "")?;
        let artifact = st.persist("cluster", &s.dataset.data.name, Some(q), Value::Object(config), |run_id| {
            let mut response = response;
            response["clustering_id"] = json!(run_id);
            (vec![clustering.clone()], Default::default(), response)
        })?;
        s.clustering = Some(clustering);
        s.clustering_id = Some(artifact.run_id.clone());
        s.cluster_params = Some(params);
        Ok((s, artifact))
    })
    .await?;
    drop(s);
    Ok(with_run_id(&artifact.run_id, artifact.response.as_ref().expect("set")))
}

#[derive(Deserialize)]
struct TableQuery {
    #[serde(default)]
    sort: ops::TableSort,
    limit: Option<usize>,
}

async fn get_table(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<TableQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let ops::TableSort::Loss = q.sort;
    let session = state.session(&id)?;
    let s = session.lock().await;
    Ok(Json(ops::table_op(
        &s.dataset.data,
        s.clustering.as_ref(),
        q.limit.unwrap_or(DEFAULT_TABLE_LIMIT),
    )))
}

#[derive(Deserialize)]
struct TokensQuery {
    top: Option<usize>,
}

async fn get_tokens(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<TokensQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let session = state.session(&id)?;
    let s = session.lock().await;
    let slice = s
        .slice
        .as_ref()
        .ok_or_else(|| ApiError::conflict("no_slice", "create a slice first"))?;
    Ok(Json(ops::tokens_op(&s.dataset.data, slice, q.top.unwrap_or(DEFAULT_TOKENS_TOP))))
}

#[derive(Deserialize)]
struct ProjectionQuery {
    cap: Option<usize>,
}

async fn get_projection(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<ProjectionQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let session = state.session(&id)?;
    let s = session.lock_owned().await;
    let cap = q.cap.unwrap_or(VIEW_POINT_CAP);
    let value = blocking(move || {
        let projection = s.dataset.projection()?;
        ops::projection_op(&s.dataset.data, projection, s.slice.as_ref(), s.clustering.as_ref(), cap)
    })
    .await?;
    Ok(Json(value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Deserialize)]
struct LabelRequest {
    #[serde(default)]
    client: ClientKind,
    task: Option<String>,
    max_tokens: Option<usize>,
}

fn make_client(kind: ClientKind) -> Result<Box<dyn LabelingClient>, ApiError> {
    Ok(match kind {
        ClientKind::Stub => Box::new(StubClient::new()),
        ClientKind::Remote => Box::new(RemoteClient::new(RemoteConfig::from_env()?)),
    })
}

async fn post_label(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let req = json_body(body)?;
    let mut spec = PromptSpec::default();
    if let Some(task) = req.task {
        spec.task = task;
    }
    if let Some(m) = req.max_tokens {
        spec.max_tokens = m;
    }
    let client = make_client(req.client)?;
    let s = session.clone().lock_owned().await;
    let (Some(q), Some(clustering), Some(params)) = (s.q, s.clustering.clone(), s.cluster_params.clone()) else {
        return Err(ApiError::conflict("no_clustering", "cluster the slice before labeling"));
    };
    let mut config = session_config(&s);
    config.insert("q".into(), json!(q));
    config.insert("cluster".into(), serde_json::to_value(&params).expect("serializable"));
    config.insert("client".into(), serde_json::to_value(req.client).expect("serializable"));
    config.insert("prompt".into(), serde_json::to_value(&spec).expect("serializable"));
    let config = Value::Object(config);

    if req.client == ClientKind::Stub {
        let st = state.clone();
        let artifact = blocking(move || {
            let out = ops::label_op(&s.dataset.data, &clustering, client.as_ref(), &spec);
            st.persist("label", &s.dataset.data.name, Some(q), config, |_| {
                (vec![clustering.clone()], out.labels, out.response)
            })
        })
        .await?;
        return Ok(with_run_id(&artifact.run_id, artifact.response.as_ref().expect("set")));
    }

    // remote: one NDJSON line per cluster as it completes, then a summary line
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<String>();
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let line_tx = tx.clone();
        let results = label_each(&s.dataset.data, &clustering, client.as_ref(), &spec, |cid, r| {
            let entry = ops::label_entry(&clustering, &s.dataset.data, cid, r);
            let line = json!({ "cluster_id": cid, "result": entry });
            let _ = line_tx.send(format!("{line}\n"));
        });
        let out = ops::assemble_labels(&clustering, &s.dataset.data, results);
        let last = match st.persist("label", &s.dataset.data.name, Some(q), config, |_| {
            (vec![clustering.clone()], out.labels, out.response)
        }) {
            Ok(a) => json!({ "done": true, "run_id": a.run_id, "labels": a.response }),
            Err(e) => json!({ "done": true, "error": { "code": e.code, "message": e.message } }),
        };
        let _ = tx.send(format!("{last}\n"));
        drop(s);
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(Bytes::from(line)), rx))
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .expect("valid response"))
}

async fn get_run(
    State(state): State<Arc<AppState>>,
    UrlPath(run_id): UrlPath<String>,
) -> Result<Json<RunArtifact>, ApiError> {
    let st = state.clone();
    let artifact = blocking(move || Ok(st.store.load(&run_id)?)).await?;
    Ok(Json(artifact))
}

/// Recomputes the response of a persisted mutating request from its config
/// snapshot alone, re-reading the dataset from disk.
pub fn replay(artifact: &RunArtifact) -> Result<Value, ApiError> {
    let cfg = &artifact.config;
    let load = || -> Result<Dataset, ApiError> {
        let path = cfg["path"]
            .as_str()
            .ok_or_else(|| ApiError::bad_request("config has no dataset path"))?;
        Ok(load_dataset(Path::new(path))?)
    };
    let q = || cfg["q"].as_f64().ok_or_else(|| ApiError::bad_request("config has no q"));
    let params = || -> Result<ClusterParams, ApiError> {
        serde_json::from_value(cfg["cluster"].clone()).map_err(|e| ApiError::bad_request(e.to_string()))
    };
    match artifact.kind.as_str() {
        "dataset" => Ok(ops::dataset_summary(&load()?)),
        "session" => Ok(json!({ "session_id": session_id_for(&artifact.run_id) })),
        "slice" => Ok(ops::slice_op(&load()?, q()?)?.1),
        "cluster" => {
            let d = load()?;
            let (slice, _) = ops::slice_op(&d, q()?)?;
            Ok(ops::cluster_op(&d, &slice, &params()?, &artifact.run_id)?.1)
        }
        "label" => {
            let d = load()?;
            let (slice, _) = ops::slice_op(&d, q()?)?;
            let (clustering, _) = ops::cluster_op(&d, &slice, &params()?, "")?;
            let kind: ClientKind =
                serde_json::from_value(cfg["client"].clone()).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let spec: PromptSpec =
                serde_json::from_value(cfg["prompt"].clone()).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let client = make_client(kind)?;
            Ok(ops::label_op(&d, &clustering, client.as_ref(), &spec).response)
        }
        other => Err(ApiError::bad_request(format!("runs of kind {other} are not replayable"))),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(RUN_ID_HEADER)]);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/datasets", post(post_dataset))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/slice", post(post_slice))
        .route("/sessions/{id}/cluster", post(post_cluster))
        .route("/sessions/{id}/table", get(get_table))
        .route("/sessions/{id}/tokens", get(get_tokens))
        .route("/sessions/{id}/projection", get(get_projection))
        .route("/sessions/{id}/label", post(post_label))
        .route("/runs/{run_id}", get(get_run))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .layer(cors)
        .with_state(state)
}

/// Opens the store, rehydrates sessions from it and serves until the
/// process is stopped.
pub async fn serve(addr: SocketAddr, store_dir: &Path) -> std::io::Result<()> {
    let store = RunStore::open(store_dir).map_err(std::io::Error::other)?;
    let state = AppState::new(store);
    match state.rehydrate() {
        Ok(n) => info!(runs = n, sessions = state.session_count(), "rehydrated"),
        Err(e) => warn!(error = %e, "rehydration failed"),
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
