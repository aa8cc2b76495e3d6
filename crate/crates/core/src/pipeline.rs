//! The batch pipeline: slice, cluster, label, summarize.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{cluster_slice, ClusteringError, KMeansConfig};
use crate::explanation::{accuracy_delta_pct, build_explanation_tuple, CentroidEmbedder, ExplanationError};
use crate::labeling::{label_all, ClusterLabel, LabelingClient, PromptSpec};
use crate::model::{Clustering, Dataset, EvalSlice, ExplanationTuple, SizeMode};
use crate::slicing::{slice_by_quantile, SlicingError};
use crate::store::{timestamp_now, RunArtifact};

/// Clusters at or above this size are split before labeling.
pub const DEFAULT_MAX_GROUP_SIZE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerChoice {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub q: f64,
    pub kmeans: KMeansConfig,
    pub subcluster: bool,
    pub max_group_size: usize,
    pub prompt: PromptSpec,
    pub labeler: LabelerChoice,
    pub size_mode: SizeMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            q: 0.98,
            kmeans: KMeansConfig::default(),
            subcluster: false,
            max_group_size: DEFAULT_MAX_GROUP_SIZE,
            prompt: PromptSpec::default(),
            labeler: LabelerChoice::Stub,
            size_mode: SizeMode::Count,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Slicing(#[from] SlicingError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Explanation(#[from] ExplanationError),
}

/// One row of the group table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub cluster_id: usize,
    /// `None` when labeling this cluster failed.
    pub label: Option<String>,
    pub size: usize,
    pub accuracy: f64,
    /// Accuracy minus overall accuracy, in percentage points.
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub dataset: String,
    pub overall_accuracy: f64,
    pub slice: EvalSlice,
    /// The initial clustering, followed by the sub-clustering when one was made.
    pub clusterings: Vec<Clustering>,
    pub tuple: ExplanationTuple,
    pub labels: BTreeMap<usize, ClusterLabel>,
    pub failures: BTreeMap<usize, String>,
    pub groups: Vec<GroupRow>,
}

pub fn run_pipeline(
    dataset: &Dataset,
    config: &PipelineConfig,
    client: &dyn LabelingClient,
) -> Result<PipelineOutput, PipelineError> {
    let slice = slice_by_quantile(dataset, config.q)?;
    let initial = cluster_slice(dataset, &slice, &config.kmeans)?;
    let max_size = if config.subcluster {
        config.max_group_size
    } else {
        usize::MAX
    };
    let outcome = label_all(dataset, &initial, client, &config.prompt, max_size, &config.kmeans)?;
    let final_clustering = outcome.clustering;
    let mut tuple = build_explanation_tuple(
        dataset,
        &final_clustering,
        &CentroidEmbedder,
        "final",
        config.size_mode,
    )?;
    for (id, m) in tuple.messages.iter_mut().enumerate() {
        m.label_text = outcome.labels.get(&id).map(|l| l.label.clone());
    }
    let overall = dataset.overall_accuracy();
    let groups = tuple
        .messages
        .iter()
        .enumerate()
        .map(|(id, m)| GroupRow {
            cluster_id: id,
            label: m.label_text.clone(),
            size: m.size,
            accuracy: m.accuracy,
            delta_pct: accuracy_delta_pct(m.accuracy, overall),
        })
        .collect();
    let mut clusterings = vec![initial];
    if final_clustering != clusterings[0] {
        clusterings.push(final_clustering);
    }
    Ok(PipelineOutput {
        dataset: dataset.name.clone(),
        overall_accuracy: overall,
        slice,
        clusterings,
        tuple,
        labels: outcome.labels,
        failures: outcome.failures,
        groups,
    })
}

/// Content-derived run id: the same dataset and config always map to the
/// same id.
pub fn pipeline_run_id(dataset: &Dataset, config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(dataset.name.as_bytes());
    h.update([0]);
    h.update(dataset.len().to_le_bytes());
    h.update(serde_json::to_vec(config).expect("serializable"));
    let digest = h.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("pipeline-{hex}")
}

impl PipelineOutput {
    pub fn to_artifact(&self, run_id: &str, config: &PipelineConfig) -> RunArtifact {
        RunArtifact {
            run_id: run_id.to_string(),
            kind: "pipeline".into(),
            dataset: self.dataset.clone(),
            q: Some(config.q),
            clusterings: self.clusterings.clone(),
            tuples: vec![self.tuple.clone()],
            labels: self.labels.clone(),
            created_at: timestamp_now(),
            config: serde_json::to_value(config).expect("serializable"),
            response: Some(serde_json::to_value(&self.groups).expect("serializable")),
        }
    }
}

/// Group table with label, size and accuracy columns; accuracy shows the
/// signed difference to overall accuracy, e.g. `0.90 (-5%)`.
pub fn format_group_table(groups: &[GroupRow], overall_accuracy: f64) -> String {
    let label_of = |g: &GroupRow| g.label.clone().unwrap_or_else(|| "<labeling failed>".into());
    let width = groups
        .iter()
        .map(|g| label_of(g).chars().count())
        .chain(std::iter::once("label".len()))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    writeln!(out, "{:<width$}  {:>6}  accuracy", "label", "size").expect("write to string");
    for g in groups {
        writeln!(
            out,
            "{:<width$}  {:>6}  {:.2} ({:+.0}%)",
            label_of(g),
            g.size,
            g.accuracy,
            g.delta_pct
        )
        .expect("write to string");
    }
    writeln!(out, "overall accuracy {overall_accuracy:.2}").expect("write to string");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::StubClient;
    use crate::model::Record;

    fn dataset() -> Dataset {
        let words = ["custard", "dentist", "parking"];
        let records = (0..120)
            .map(|i| {
                let g = i % 3;
                Record {
                    id: format!("r{i}"),
                    text: format!("{} review number{}", words[g], i % 7),
                    label: (i % 2),
                    prediction: usize::from(i % 5 == 0),
                    loss: (i as f64 * 0.61).sin().abs() + g as f64,
                    embedding: vec![g as f64 * 10.0 + (i as f64 * 0.3).cos(), (i as f64 * 0.7).sin()],
                }
            })
            .collect();
        Dataset {
            name: "mini".into(),
            num_classes: 2,
            embedding_dim: 2,
            records,
        }
    }

    #[test]
    fn end_to_end_with_subclustering() {
        let d = dataset();
        let cfg = PipelineConfig {
            q: 0.5,
            subcluster: true,
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&d, &cfg, &StubClient::new()).unwrap();
        assert_eq!(out.slice.len(), 60);
        assert!(out.groups.iter().all(|g| g.size < 25));
        assert_eq!(out.groups.iter().map(|g| g.size).sum::<usize>(), 60);
        assert!(out.failures.is_empty());
        assert!(out.groups.iter().all(|g| g.label.is_some()));
        let again = run_pipeline(&d, &cfg, &StubClient::new()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn run_id_tracks_config() {
        let d = dataset();
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.kmeans.seed = 1;
        assert_eq!(pipeline_run_id(&d, &a), pipeline_run_id(&d, &a));
        assert_ne!(pipeline_run_id(&d, &a), pipeline_run_id(&d, &b));
    }

    #[test]
    fn table_layout() {
        let rows = vec![GroupRow {
            cluster_id: 0,
            label: Some("Club reviews".into()),
            size: 574,
            accuracy: 517.0 / 574.0,
            delta_pct: -5.0,
        }];
        let t = format_group_table(&rows, 0.95);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "label           size  accuracy");
        assert_eq!(lines[1], "Club reviews     574  0.90 (-5%)");
    }
}
