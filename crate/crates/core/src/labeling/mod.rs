//! Semantic labels for clusters from a completion model.
//!
//! Member texts are packed into a fixed zero-shot prompt, truncated to the
//! token budget and sent to a [`LabelingClient`]. [`StubClient`] is an
//! offline, deterministic stand-in; [`RemoteClient`] talks to an HTTP
//! completion endpoint.

mod prompt;
mod remote;
mod stub;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use prompt::{
    build_prompt, count_tokens, instruction, parse_prompt, truncate_documents, truncate_tokens,
    PromptError, PromptSpec, DEFAULT_MAX_TOKENS, MIN_MAX_TOKENS, PROMPT_SUFFIX,
};
pub use remote::{RemoteClient, RemoteConfig, DEFAULT_API_KEY_ENV};
pub use stub::{StubClient, EMPTY_LABEL};

use crate::clustering::{subcluster, ClusteringError, KMeansConfig};
use crate::explanation::group_accuracy;
use crate::model::{Clustering, Dataset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("could not decode completion: {0}")]
    Decode(String),
    #[error("client misconfigured: {0}")]
    Config(String),
}

/// A text-completion backend.
pub trait LabelingClient: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str) -> Result<String, ClientError>;

    /// Concurrent `complete` calls allowed by this client.
    fn max_parallelism(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelingError {
    #[error("cluster {cluster} has no members")]
    EmptyCluster { cluster: usize },
    #[error("labeling cluster {cluster} failed: {source}")]
    Client { cluster: usize, source: ClientError },
}

/// A cluster label together with the exact prompt that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub cluster_id: usize,
    pub label: String,
    pub prompt: String,
    pub size: usize,
    pub accuracy: f64,
}

/// Labels one group of records.
pub fn label_cluster(
    dataset: &Dataset,
    cluster_id: usize,
    members: &[usize],
    client: &dyn LabelingClient,
    spec: &PromptSpec,
) -> Result<ClusterLabel, LabelingError> {
    if members.is_empty() {
        return Err(LabelingError::EmptyCluster { cluster: cluster_id });
    }
    let texts: Vec<&str> = members.iter().map(|&i| dataset.records[i].text.as_str()).collect();
    let kept = truncate_documents(&texts, &spec.task, spec.max_tokens.max(MIN_MAX_TOKENS));
    let prompt = build_prompt(&kept, &spec.task).expect("non-empty members");
    let label = client
        .complete(&prompt)
        .map_err(|source| LabelingError::Client {
            cluster: cluster_id,
            source,
        })?
        .trim()
        .to_string();
    Ok(ClusterLabel {
        cluster_id,
        label,
        prompt,
        size: members.len(),
        accuracy: group_accuracy(dataset, members).expect("non-empty members"),
    })
}

/// Result of [`label_all`]: the (sub-)clustering that was labeled, labels
/// for the clusters that succeeded and the error text for those that did not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingOutcome {
    pub clustering: Clustering,
    pub labels: BTreeMap<usize, ClusterLabel>,
    pub failures: BTreeMap<usize, String>,
}

/// Sub-clusters until every cluster is smaller than `max_size`, then labels
/// each resulting cluster. A failing cluster does not stop its siblings.
pub fn label_all(
    dataset: &Dataset,
    clustering: &Clustering,
    client: &dyn LabelingClient,
    spec: &PromptSpec,
    max_size: usize,
    kmeans: &KMeansConfig,
) -> Result<LabelingOutcome, ClusteringError> {
    let clustering = subcluster(dataset, clustering, max_size, kmeans)?;
    let results = label_each(dataset, &clustering, client, spec, |_, _| {});
    let mut labels = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (id, res) in results {
        match res {
            Ok(l) => {
                labels.insert(id, l);
            }
            Err(e) => {
                failures.insert(id, e.to_string());
            }
        }
    }
    Ok(LabelingOutcome {
        clustering,
        labels,
        failures,
    })
}

/// Labels every cluster of `clustering` as-is, running up to
/// `client.max_parallelism()` requests at once. `on_result` is called as
/// each cluster finishes, in completion order.
pub fn label_each<F>(
    dataset: &Dataset,
    clustering: &Clustering,
    client: &dyn LabelingClient,
    spec: &PromptSpec,
    on_result: F,
) -> BTreeMap<usize, Result<ClusterLabel, LabelingError>>
where
    F: Fn(usize, &Result<ClusterLabel, LabelingError>) + Sync,
{
    let members: Vec<Vec<usize>> = (0..clustering.k).map(|id| clustering.members_of(id)).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(BTreeMap::new());
    let workers = client.max_parallelism().clamp(1, clustering.k.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::SeqCst);
                if id >= members.len() {
                    break;
                }
                let res = label_cluster(dataset, id, &members[id], client, spec);
                on_result(id, &res);
                results.lock().unwrap().insert(id, res);
            });
        }
    });
    results.into_inner().unwrap()
}
