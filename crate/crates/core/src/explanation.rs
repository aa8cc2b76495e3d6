//! Explanation tuples and the max-min paired distance between them.
//!
//! Each cluster is summarized as a message `(w, s, a)`: a sentence vector,
//! its size and its group accuracy. Two tuples are compared by
//!
//! ```text
//! dmax(M, M') = max_i min_j ( |v(m_i) - v(m'_j)| + |v(m'_i) - v(m_j)| )
//! ```
//!
//! where `v` concatenates `w`, `s` and `a` into one vector.

use crate::model::{message_vector, Clustering, Dataset, ExplanationMessage, ExplanationTuple, SizeMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplanationError {
    #[error("group has no members")]
    EmptyGroup,
    #[error("sentence embedder failed on cluster {cluster}: {reason}")]
    EmbedderFailure { cluster: usize, reason: String },
    #[error("tuples have different sizes ({left} vs {right})")]
    KMismatch { left: usize, right: usize },
    #[error("message vectors have different dimensions")]
    DimMismatch,
    #[error("tuple is empty")]
    EmptyTuple,
}

/// Fraction of `members` whose prediction equals the label.
pub fn group_accuracy(dataset: &Dataset, members: &[usize]) -> Result<f64, ExplanationError> {
    if members.is_empty() {
        return Err(ExplanationError::EmptyGroup);
    }
    let correct = members
        .iter()
        .filter(|&&i| dataset.records[i].is_correct())
        .count();
    Ok(correct as f64 / members.len() as f64)
}

/// Group accuracy minus overall accuracy, in percentage points.
pub fn accuracy_delta_pct(group: f64, overall: f64) -> f64 {
    (group - overall) * 100.0
}

/// What a sentence embedder sees of a cluster.
pub struct ClusterView<'a> {
    pub id: usize,
    pub center: &'a [f64],
    pub members: &'a [usize],
    pub dataset: &'a Dataset,
}

/// Maps a cluster to its sentence vector `w_k`.
pub trait SentenceEmbedder {
    fn embed(&self, cluster: &ClusterView<'_>) -> Result<Vec<f64>, String>;
}

impl<F> SentenceEmbedder for F
where
    F: Fn(&ClusterView<'_>) -> Result<Vec<f64>, String>,
{
    fn embed(&self, cluster: &ClusterView<'_>) -> Result<Vec<f64>, String> {
        self(cluster)
    }
}

/// Uses the cluster center as the sentence vector (Lipschitz constant 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct CentroidEmbedder;

impl SentenceEmbedder for CentroidEmbedder {
    fn embed(&self, cluster: &ClusterView<'_>) -> Result<Vec<f64>, String> {
        Ok(cluster.center.to_vec())
    }
}

/// One message per cluster, in cluster-id order.
pub fn build_explanation_tuple(
    dataset: &Dataset,
    clustering: &Clustering,
    embedder: &dyn SentenceEmbedder,
    source_clustering_id: impl Into<String>,
    size_mode: SizeMode,
) -> Result<ExplanationTuple, ExplanationError> {
    let total = clustering.slice.len() as f64;
    let mut messages = Vec::with_capacity(clustering.k);
    for id in 0..clustering.k {
        let members = clustering.members_of(id);
        let view = ClusterView {
            id,
            center: &clustering.centers[id],
            members: &members,
            dataset,
        };
        let sentence_vector = embedder
            .embed(&view)
            .map_err(|reason| ExplanationError::EmbedderFailure { cluster: id, reason })?;
        let accuracy = group_accuracy(dataset, &members)?;
        messages.push(ExplanationMessage {
            sentence_vector,
            size: members.len(),
            size_fraction: members.len() as f64 / total,
            accuracy,
            label_text: None,
        });
    }
    let width = messages.first().map(|m| m.sentence_vector.len());
    if messages.iter().any(|m| Some(m.sentence_vector.len()) != width) {
        return Err(ExplanationError::DimMismatch);
    }
    Ok(ExplanationTuple {
        messages,
        source_clustering_id: source_clustering_id.into(),
        size_mode,
    })
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `max_i min_j (|a_i - b_j| + |b_i - a_j|)` over equally sized vector lists.
pub(crate) fn paired_max_min(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    (0..a.len())
        .map(|i| {
            (0..a.len())
                .map(|j| euclidean(&a[i], &b[j]) + euclidean(&b[i], &a[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// `|v(m_i) - v(m'_j)| + |v(m'_i) - v(m_j)|`.
pub fn pair_distance(
    m_i: &ExplanationMessage,
    m_i_prime: &ExplanationMessage,
    m_j: &ExplanationMessage,
    m_j_prime: &ExplanationMessage,
    size_mode: SizeMode,
) -> Result<f64, ExplanationError> {
    let d = m_i.sentence_vector.len();
    if [m_i_prime, m_j, m_j_prime]
        .iter()
        .any(|m| m.sentence_vector.len() != d)
    {
        return Err(ExplanationError::DimMismatch);
    }
    let v = |m: &ExplanationMessage| message_vector(m, size_mode);
    Ok(euclidean(&v(m_i), &v(m_j_prime)) + euclidean(&v(m_i_prime), &v(m_j)))
}

/// Max-min paired distance between two tuples with the same number of
/// messages and the same sentence-vector width.
pub fn dmax(
    left: &ExplanationTuple,
    right: &ExplanationTuple,
    size_mode: SizeMode,
) -> Result<f64, ExplanationError> {
    if left.k() != right.k() {
        return Err(ExplanationError::KMismatch {
            left: left.k(),
            right: right.k(),
        });
    }
    if left.k() == 0 {
        return Err(ExplanationError::EmptyTuple);
    }
    let width = left.messages[0].sentence_vector.len();
    if left
        .messages
        .iter()
        .chain(&right.messages)
        .any(|m| m.sentence_vector.len() != width)
    {
        return Err(ExplanationError::DimMismatch);
    }
    let a: Vec<Vec<f64>> = left.messages.iter().map(|m| message_vector(m, size_mode)).collect();
    let b: Vec<Vec<f64>> = right.messages.iter().map(|m| message_vector(m, size_mode)).collect();
    Ok(paired_max_min(&a, &b))
}
