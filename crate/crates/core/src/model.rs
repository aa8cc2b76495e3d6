//! Shared domain types: records, datasets, slices, clusterings and
//! explanation messages.
//!
//! Everything here is plain data. Construction does not validate; call
//! [`validate_dataset`] (or go through [`crate::io::load_dataset`]) before
//! handing a dataset to the algorithms.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: usize,
    pub prediction: usize,
    pub loss: f64,
    pub embedding: Vec<f64>,
}

impl Record {
    pub fn is_correct(&self) -> bool {
        self.label == self.prediction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of records with `label == prediction`.
    pub fn overall_accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let correct = self.records.iter().filter(|r| r.is_correct()).count();
        correct as f64 / self.records.len() as f64
    }

    pub fn embeddings_of(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| self.records[i].embedding.clone())
            .collect()
    }
}

/// A rule broken by a dataset or one of its records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyDataset,
    ZeroClasses,
    ZeroDimension,
    DuplicateId(String),
    DimMismatch(String),
    InvalidLoss(String),
    NonFiniteEmbedding(String),
    LabelOutOfRange(String),
    PredictionOutOfRange(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDataset => write!(f, "dataset has no records"),
            Violation::ZeroClasses => write!(f, "num_classes must be positive"),
            Violation::ZeroDimension => write!(f, "embedding_dim must be positive"),
            Violation::DuplicateId(id) => write!(f, "duplicate record id {id:?}"),
            Violation::DimMismatch(id) => write!(f, "record {id:?}: embedding dimension mismatch"),
            Violation::InvalidLoss(id) => write!(f, "record {id:?}: loss must be finite and >= 0"),
            Violation::NonFiniteEmbedding(id) => {
                write!(f, "record {id:?}: embedding has non-finite values")
            }
            Violation::LabelOutOfRange(id) => write!(f, "record {id:?}: label >= num_classes"),
            Violation::PredictionOutOfRange(id) => {
                write!(f, "record {id:?}: prediction >= num_classes")
            }
        }
    }
}

/// Checks every record and dataset invariant. An empty result means the
/// dataset is valid; violations are reported in record order.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if dataset.records.is_empty() {
        out.push(Violation::EmptyDataset);
    }
    if dataset.num_classes == 0 {
        out.push(Violation::ZeroClasses);
    }
    if dataset.embedding_dim == 0 {
        out.push(Violation::ZeroDimension);
    }
    let mut seen = HashSet::with_capacity(dataset.records.len());
    for r in &dataset.records {
        if !seen.insert(r.id.as_str()) {
            out.push(Violation::DuplicateId(r.id.clone()));
        }
        if !(r.loss.is_finite() && r.loss >= 0.0) {
            out.push(Violation::InvalidLoss(r.id.clone()));
        }
        if r.embedding.len() != dataset.embedding_dim {
            out.push(Violation::DimMismatch(r.id.clone()));
        } else if r.embedding.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFiniteEmbedding(r.id.clone()));
        }
        if r.label >= dataset.num_classes {
            out.push(Violation::LabelOutOfRange(r.id.clone()));
        }
        if r.prediction >= dataset.num_classes {
            out.push(Violation::PredictionOutOfRange(r.id.clone()));
        }
    }
    out
}

/// Error bucket of a misclassified (or correctly classified) example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ErrorType {
    /// Binary task: label 0 predicted as 1.
    FalsePositive,
    /// Binary task: label 1 predicted as 0.
    FalseNegative,
    Correct,
    /// Multi-class confusion `label -> prediction`.
    Confusion { label: usize, prediction: usize },
}

impl ErrorType {
    pub fn of(record: &Record, num_classes: usize) -> ErrorType {
        match (record.label, record.prediction) {
            (l, p) if l == p => ErrorType::Correct,
            (0, 1) if num_classes == 2 => ErrorType::FalsePositive,
            (1, 0) if num_classes == 2 => ErrorType::FalseNegative,
            (label, prediction) => ErrorType::Confusion { label, prediction },
        }
    }

    pub fn short_name(&self) -> String {
        match self {
            ErrorType::FalsePositive => "FP".to_string(),
            ErrorType::FalseNegative => "FN".to_string(),
            ErrorType::Correct => "correct".to_string(),
            ErrorType::Confusion { label, prediction } => format!("{label}->{prediction}"),
        }
    }
}

/// Where a slice came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Quantile { q: f64 },
    ErrorType { error_type: ErrorType },
    Cluster { cluster_id: usize },
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("slice is empty")]
    Empty,
    #[error("slice indices must be strictly increasing")]
    NotSorted,
    #[error("slice index {index} out of range for dataset of {len} records")]
    OutOfRange { index: usize, len: usize },
}

/// An indexed, non-empty subset of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSlice {
    pub dataset_ref: String,
    member_indices: Vec<usize>,
    pub provenance: Provenance,
}

impl EvalSlice {
    /// Builds a slice, checking that `member_indices` are strictly increasing
    /// and in range for `dataset_len`.
    pub fn new(
        dataset_ref: impl Into<String>,
        member_indices: Vec<usize>,
        dataset_len: usize,
        provenance: Provenance,
    ) -> Result<Self, SliceError> {
        if member_indices.is_empty() {
            return Err(SliceError::Empty);
        }
        if member_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SliceError::NotSorted);
        }
        let last = *member_indices.last().unwrap();
        if last >= dataset_len {
            return Err(SliceError::OutOfRange {
                index: last,
                len: dataset_len,
            });
        }
        Ok(EvalSlice {
            dataset_ref: dataset_ref.into(),
            member_indices,
            provenance,
        })
    }

    /// The whole dataset as a slice.
    pub fn full(dataset: &Dataset) -> Result<Self, SliceError> {
        EvalSlice::new(
            dataset.name.clone(),
            (0..dataset.len()).collect(),
            dataset.len(),
            Provenance::Manual,
        )
    }

    pub fn members(&self) -> &[usize] {
        &self.member_indices
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }
}

/// Result of a k-means fit on a list of points. Assignments are positional:
/// `assignments[i]` is the cluster of the i-th input point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// Set when the input had fewer distinct points than `k`.
    pub degenerate: bool,
}

impl KMeansFit {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// A clustering of the members of a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub slice: EvalSlice,
    pub k: usize,
    /// `assignments[i]` is the cluster of `slice.members()[i]`.
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub objective: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Cluster ids that could not be split further (all points identical).
    #[serde(default)]
    pub unsplittable: Vec<usize>,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Dataset indices of the members of cluster `id`, ascending.
    pub fn members_of(&self, id: usize) -> Vec<usize> {
        self.slice
            .members()
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &a)| a == id)
            .map(|(&m, _)| m)
            .collect()
    }

    /// Cluster of dataset index `index`, if it belongs to the slice.
    pub fn cluster_of(&self, index: usize) -> Option<usize> {
        self.slice
            .members()
            .binary_search(&index)
            .ok()
            .map(|pos| self.assignments[pos])
    }
}

/// Which size value enters the vectorized message.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    /// Raw member count.
    #[default]
    Count,
    /// Member count divided by the number of clustered points.
    Fraction,
}

impl std::str::FromStr for SizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(SizeMode::Count),
            "fraction" => Ok(SizeMode::Fraction),
            other => Err(format!("unknown size mode {other:?} (expected count|fraction)")),
        }
    }
}

/// Summary of one cluster: sentence vector, size and group accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMessage {
    pub sentence_vector: Vec<f64>,
    pub size: usize,
    pub size_fraction: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_text: Option<String>,
}

impl ExplanationMessage {
    pub fn size_value(&self, mode: SizeMode) -> f64 {
        match mode {
            SizeMode::Count => self.size as f64,
            SizeMode::Fraction => self.size_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTuple {
    pub messages: Vec<ExplanationMessage>,
    pub source_clustering_id: String,
    #[serde(default)]
    pub size_mode: SizeMode,
}

impl ExplanationTuple {
    pub fn k(&self) -> usize {
        self.messages.len()
    }
}

/// Flattens a message to `[w_1, .., w_d, s, a]`.
pub fn message_vector(m: &ExplanationMessage, mode: SizeMode) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.sentence_vector.len() + 2);
    v.extend_from_slice(&m.sentence_vector);
    v.push(m.size_value(mode));
    v.push(m.accuracy);
    v
}
