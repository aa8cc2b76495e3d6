//! Directory-backed store of run artifacts.
//!
//! Each run lives in `<root>/<run_id>/` as `clusterings.json`,
//! `tuples.json`, `labels.json` and `manifest.json`. Creating the run
//! directory is the write lock: a second save to the same id fails instead
//! of overwriting. The manifest is written last, so a run without one is
//! treated as absent.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::labeling::ClusterLabel;
use crate::model::{Clustering, ExplanationTuple};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run {0} already exists")]
    AlreadyExists(String),
    #[error("invalid run id {0:?}")]
    InvalidRunId(String),
    #[error("store i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt artifact {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

/// Everything needed to inspect or replay one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    /// What produced the run, e.g. `pipeline` or `cluster`.
    pub kind: String,
    pub dataset: String,
    pub q: Option<f64>,
    pub clusterings: Vec<Clustering>,
    pub tuples: Vec<ExplanationTuple>,
    pub labels: BTreeMap<usize, ClusterLabel>,
    pub created_at: String,
    /// Inputs sufficient to replay the run, seeds included.
    pub config: Value,
    /// Response payload returned to the caller, when there was one.
    pub response: Option<Value>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    run_id: String,
    kind: String,
    dataset: String,
    q: Option<f64>,
    created_at: String,
    config: Value,
    response: Option<Value>,
}

/// RFC 3339 UTC timestamp; `SOURCE_DATE_EPOCH` pins it for reproducible output.
pub fn timestamp_now() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        if !valid_run_id(run_id) {
            return Err(StoreError::InvalidRunId(run_id.to_string()));
        }
        Ok(self.root.join(run_id))
    }

    fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        fs::write(path, text).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
        let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    fn reserve(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        let dir = self.dir(run_id)?;
        match fs::create_dir(&dir) {
            Ok(()) => Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(StoreError::AlreadyExists(run_id.to_string())),
            Err(source) => Err(StoreError::Io {
                path: dir.display().to_string(),
                source,
            }),
        }
    }

    fn write_files(dir: &Path, artifact: &RunArtifact) -> Result<(), StoreError> {
        Self::write_json(&dir.join("clusterings.json"), &artifact.clusterings)?;
        Self::write_json(&dir.join("tuples.json"), &artifact.tuples)?;
        Self::write_json(&dir.join("labels.json"), &artifact.labels)?;
        Self::write_json(
            &dir.join("manifest.json"),
            &Manifest {
                run_id: artifact.run_id.clone(),
                kind: artifact.kind.clone(),
                dataset: artifact.dataset.clone(),
                q: artifact.q,
                created_at: artifact.created_at.clone(),
                config: artifact.config.clone(),
                response: artifact.response.clone(),
            },
        )
    }

    /// Saves under `artifact.run_id`; fails if that id is taken.
    pub fn save(&self, artifact: &RunArtifact) -> Result<String, StoreError> {
        let dir = self.reserve(&artifact.run_id)?;
        Self::write_files(&dir, artifact)?;
        Ok(artifact.run_id.clone())
    }

    /// Allocates the next free id `<prefix>-NNNNNN`, then saves the artifact
    /// `build` makes for that id. Ids increase in allocation order.
    pub fn save_with<F>(&self, prefix: &str, build: F) -> Result<RunArtifact, StoreError>
    where
        F: FnOnce(&str) -> RunArtifact,
    {
        let mut next = self.list()?.len() + 1;
        let (run_id, dir) = loop {
            let id = format!("{prefix}-{next:06}");
            match self.reserve(&id) {
                Ok(dir) => break (id, dir),
                Err(StoreError::AlreadyExists(_)) => next += 1,
                Err(e) => return Err(e),
            }
        };
        let mut artifact = build(&run_id);
        artifact.run_id = run_id;
        Self::write_files(&dir, &artifact)?;
        Ok(artifact)
    }

    pub fn load(&self, run_id: &str) -> Result<RunArtifact, StoreError> {
        let dir = self.dir(run_id)?;
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        let m: Manifest = Self::read_json(&manifest_path)?;
        Ok(RunArtifact {
            run_id: m.run_id,
            kind: m.kind,
            dataset: m.dataset,
            q: m.q,
            clusterings: Self::read_json(&dir.join("clusterings.json"))?,
            tuples: Self::read_json(&dir.join("tuples.json"))?,
            labels: Self::read_json(&dir.join("labels.json"))?,
            created_at: m.created_at,
            config: m.config,
            response: m.response,
        })
    }

    /// Ids of complete runs, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = fs::read_dir(&self.root).map_err(|source| StoreError::Io {
            path: self.root.display().to_string(),
            source,
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join("manifest.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }
}
