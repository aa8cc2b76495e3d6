//! Request operations as plain functions of their inputs. Handlers and
//! [`replay`](crate::replay) both go through these, so a persisted config
//! snapshot recomputes the same payload.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use errslice_core::analytics::{downsample_for_view, token_stats, Projection, VIEW_POINT_CAP};
use errslice_core::clustering::{cluster_slice, subcluster, KMeansConfig};
use errslice_core::labeling::{label_each, ClusterLabel, LabelingClient, LabelingError, PromptSpec};
use errslice_core::model::{Clustering, Dataset, ErrorType, EvalSlice};
use errslice_core::pipeline::DEFAULT_MAX_GROUP_SIZE;
use errslice_core::slicing::slice_by_quantile;

use crate::error::ApiError;

/// Record ids listed in a slice response, highest loss first.
pub const PREVIEW_LEN: usize = 10;
pub const DEFAULT_TABLE_LIMIT: usize = 100;
pub const DEFAULT_TOKENS_TOP: usize = 20;
/// Seed used to pick which points a capped projection shows.
pub const VIEW_SEED: u64 = 0;

pub fn dataset_summary(dataset: &Dataset) -> Value {
    json!({
        "name": dataset.name,
        "n": dataset.len(),
        "dim": dataset.embedding_dim,
        "num_classes": dataset.num_classes,
    })
}

/// Slice members ordered by descending loss, ties by index.
fn by_loss_desc(dataset: &Dataset, indices: &mut [usize]) {
    indices.sort_by(|&a, &b| {
        dataset.records[b]
            .loss
            .total_cmp(&dataset.records[a].loss)
            .then(a.cmp(&b))
    });
}

pub fn slice_op(dataset: &Dataset, q: f64) -> Result<(EvalSlice, Value), ApiError> {
    if !(0.0..1.0).contains(&q) {
        return Err(ApiError::unprocessable("invalid_quantile", format!("q = {q} is outside [0, 1)")));
    }
    let slice = slice_by_quantile(dataset, q)?;
    let mut ordered = slice.members().to_vec();
    by_loss_desc(dataset, &mut ordered);
    let preview: Vec<&str> = ordered
        .iter()
        .take(PREVIEW_LEN)
        .map(|&i| dataset.records[i].id.as_str())
        .collect();
    let response = json!({ "slice_size": slice.len(), "members_preview": preview });
    Ok((slice, response))
}

/// Parameters of a cluster request with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub subcluster: bool,
}

impl ClusterParams {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.seed,
            restarts: self.restarts,
            ..KMeansConfig::default()
        }
    }
}

pub fn cluster_op(
    dataset: &Dataset,
    slice: &EvalSlice,
    params: &ClusterParams,
    clustering_id: &str,
) -> Result<(Clustering, Value), ApiError> {
    if params.restarts == 0 {
        return Err(ApiError::unprocessable("clustering_error", "restarts must be positive"));
    }
    if let Some(k) = params.k {
        if k == 0 || k > slice.len() {
            return Err(ApiError::unprocessable(
                "clustering_error",
                format!("k = {k} is invalid for a slice of {}", slice.len()),
            ));
        }
    }
    let config = params.kmeans();
    let mut clustering = cluster_slice(dataset, slice, &config)?;
    if params.subcluster {
        clustering = subcluster(dataset, &clustering, DEFAULT_MAX_GROUP_SIZE, &config)?;
    }
    let response = json!({
        "clustering_id": clustering_id,
        "k": clustering.k,
        "sizes": clustering.cluster_sizes(),
        "objective": clustering.objective,
    });
    Ok((clustering, response))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSort {
    #[default]
    Loss,
}

pub fn table_op(dataset: &Dataset, clustering: Option<&Clustering>, limit: usize) -> Value {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    by_loss_desc(dataset, &mut order);
    let rows: Vec<Value> = order
        .into_iter()
        .take(limit)
        .map(|i| {
            let r = &dataset.records[i];
            json!({
                "id": r.id,
                "text": r.text,
                "label": r.label,
                "prediction": r.prediction,
                "loss": r.loss,
                "cluster": clustering.and_then(|c| c.cluster_of(i)),
            })
        })
        .collect();
    json!({ "rows": rows })
}

pub fn tokens_op(dataset: &Dataset, slice: &EvalSlice, top: usize) -> Value {
    json!({ "rows": token_stats(dataset, slice, top) })
}

/// Projected points, downsampled per group (each cluster, the unclustered
/// part of the slice, and everything outside the slice) to at most `cap`.
pub fn projection_op(
    dataset: &Dataset,
    projection: &Projection,
    slice: Option<&EvalSlice>,
    clustering: Option<&Clustering>,
    cap: usize,
) -> Result<Value, ApiError> {
    let cap = cap.min(VIEW_POINT_CAP);
    let in_slice = |i: usize| slice.is_some_and(|s| s.members().binary_search(&i).is_ok());
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        let key = match clustering.and_then(|c| c.cluster_of(i)) {
            Some(c) => c as i64,
            None if in_slice(i) => -1,
            None => -2,
        };
        groups.entry(key).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_values().enumerate().collect();
    let picked = downsample_for_view(&groups, cap, VIEW_SEED)
        .map_err(|e| ApiError::unprocessable("cap_too_small", e.to_string()))?;
    let mut picked = picked;
    picked.sort_unstable();
    let points: Vec<Value> = picked
        .into_iter()
        .map(|i| {
            let r = &dataset.records[i];
            let [x, y] = projection.coords[i];
            json!({
                "id": r.id,
                "x": x,
                "y": y,
                "cluster": clustering.and_then(|c| c.cluster_of(i)),
                "error_type": ErrorType::of(r, dataset.num_classes).short_name(),
                "in_slice": in_slice(i),
            })
        })
        .collect();
    Ok(json!({
        "total": dataset.len(),
        "cap": cap,
        "degenerate": projection.degenerate,
        "points": points,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: Option<String>,
    pub size: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn label_entry(
    clustering: &Clustering,
    dataset: &Dataset,
    id: usize,
    result: &Result<ClusterLabel, LabelingError>,
) -> LabelEntry {
    match result {
        Ok(l) => LabelEntry {
            label: Some(l.label.clone()),
            size: l.size,
            accuracy: l.accuracy,
            error: None,
        },
        Err(e) => {
            let members = clustering.members_of(id);
            let correct = members.iter().filter(|&&m| dataset.records[m].is_correct()).count();
            LabelEntry {
                label: None,
                size: members.len(),
                accuracy: if members.is_empty() {
                    0.0
                } else {
                    correct as f64 / members.len() as f64
                },
                error: Some(e.to_string()),
            }
        }
    }
}

pub struct LabelOutput {
    pub labels: BTreeMap<usize, ClusterLabel>,
    pub response: Value,
}

pub fn assemble_labels(
    clustering: &Clustering,
    dataset: &Dataset,
    results: BTreeMap<usize, Result<ClusterLabel, LabelingError>>,
) -> LabelOutput {
    let entries: BTreeMap<usize, LabelEntry> = results
        .iter()
        .map(|(&id, r)| (id, label_entry(clustering, dataset, id, r)))
        .collect();
    let labels = results
        .into_iter()
        .filter_map(|(id, r)| r.ok().map(|l| (id, l)))
        .collect();
    let response = serde_json::to_value(entries).expect("serializable");
    LabelOutput { labels, response }
}

pub fn label_op(
    dataset: &Dataset,
    clustering: &Clustering,
    client: &dyn LabelingClient,
    spec: &PromptSpec,
) -> LabelOutput {
    let results = label_each(dataset, clustering, client, spec, |_, _| {});
    assemble_labels(clustering, dataset, results)
}
