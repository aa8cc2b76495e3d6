//! One paired `(S, T)` stability run.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{sample_paired_datasets, synthetic_dataset, LipschitzLabeler, StabilityError, SyntheticDistribution};
use crate::clustering::{canonical_order, cluster_slice, exact_kmeans_oracle, KMeansConfig};
use crate::explanation::{build_explanation_tuple, dmax, paired_max_min, ExplanationError};
use crate::model::{Clustering, Dataset, EvalSlice, SizeMode};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMode {
    /// Exact optimum by enumeration; small `n` only.
    Oracle,
    /// Best of several k-means++ restarts.
    Restarts,
}

impl ClusteringMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusteringMode::Oracle => "oracle",
            ClusteringMode::Restarts => "restarts",
        }
    }
}

impl FromStr for ClusteringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(ClusteringMode::Oracle),
            "restarts" => Ok(ClusteringMode::Restarts),
            other => Err(format!("unknown clustering mode {other:?} (expected oracle or restarts)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n: usize,
    /// Perturbation exponent: `m = floor(n^gamma)`.
    pub gamma: f64,
    /// Replaces the `gamma` rule when set.
    pub m_override: Option<usize>,
    pub k: usize,
    pub mode: ClusteringMode,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            n: 256,
            gamma: 0.25,
            m_override: None,
            k: 3,
            mode: ClusteringMode::Restarts,
            restarts: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub mode: ClusteringMode,
    pub seed: u64,
    pub sample_seed: u64,
    pub cluster_seed: u64,
    pub label_seed: u64,
    /// Center-level max-min distance between the two clusterings.
    pub epsilon: f64,
    pub dmax: f64,
    pub bound: f64,
    pub bound_satisfied: bool,
}

/// `floor(n^gamma)`, kept below `n`.
pub fn perturbation_size(n: usize, gamma: f64) -> usize {
    // the epsilon absorbs powf rounding at exact powers (4096^0.25 = 8)
    let m = ((n as f64).powf(gamma) + 1e-9).floor() as usize;
    m.min(n.saturating_sub(1))
}

/// `max_i min_j (|c_i - c'_j| + |c'_i - c_j|)` over two center lists.
pub fn center_dmax(left: &[Vec<f64>], right: &[Vec<f64>]) -> Result<f64, ExplanationError> {
    if left.len() != right.len() {
        return Err(ExplanationError::KMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    if left.is_empty() {
        return Err(ExplanationError::EmptyTuple);
    }
    let d = left[0].len();
    if left.iter().chain(right).any(|c| c.len() != d) {
        return Err(ExplanationError::DimMismatch);
    }
    Ok(paired_max_min(left, right))
}

/// `3 * epsilon * max(6 K^2 B, beta)`.
pub fn perturbation_bound(epsilon: f64, k: usize, diameter: f64, beta: f64) -> f64 {
    let k = k as f64;
    3.0 * epsilon * (6.0 * k * k * diameter).max(beta)
}

fn cluster(dataset: &Dataset, config: &TrialConfig, seed: u64) -> Result<Clustering, StabilityError> {
    let slice = EvalSlice::full(dataset).map_err(|e| StabilityError::InvalidConfig(e.to_string()))?;
    match config.mode {
        ClusteringMode::Restarts => {
            let kc = KMeansConfig {
                k: Some(config.k),
                seed,
                restarts: config.restarts,
                ..KMeansConfig::default()
            };
            Ok(cluster_slice(dataset, &slice, &kc)?)
        }
        ClusteringMode::Oracle => {
            let points = dataset.embeddings_of(slice.members());
            let fit = canonical_order(exact_kmeans_oracle(&points, config.k)?);
            Ok(Clustering {
                slice,
                k: fit.k,
                assignments: fit.assignments,
                centers: fit.centers,
                objective: fit.objective,
                seed,
                restarts: 1,
                unsplittable: Vec::new(),
            })
        }
    }
}

/// Samples `S` and `T`, clusters both with the same seed, builds fraction-mode
/// explanation tuples with `labeler` and compares them.
pub fn run_trial(
    dist: &SyntheticDistribution,
    config: &TrialConfig,
    labeler: &LipschitzLabeler,
) -> Result<StabilityTrial, StabilityError> {
    let m = config
        .m_override
        .unwrap_or_else(|| perturbation_size(config.n, config.gamma));
    let sample_seed = derive_seed(config.seed, 0);
    let cluster_seed = derive_seed(config.seed, 1);
    let label_seed = derive_seed(config.seed, 2);
    let (s, t) = sample_paired_datasets(dist, config.n, m, sample_seed)?;
    let ds = synthetic_dataset(dist, &s, label_seed);
    let dt = synthetic_dataset(dist, &t, label_seed);
    let cs = cluster(&ds, config, cluster_seed)?;
    let ct = cluster(&dt, config, cluster_seed)?;
    let ms = build_explanation_tuple(&ds, &cs, labeler, "S", SizeMode::Fraction)?;
    let mt = build_explanation_tuple(&dt, &ct, labeler, "T", SizeMode::Fraction)?;
    let epsilon = center_dmax(&cs.centers, &ct.centers)?;
    let d = dmax(&ms, &mt, SizeMode::Fraction)?;
    let bound = perturbation_bound(epsilon, config.k, dist.diameter, labeler.beta());
    Ok(StabilityTrial {
        n: config.n,
        m,
        k: config.k,
        mode: config.mode,
        seed: config.seed,
        sample_seed,
        cluster_seed,
        label_seed,
        epsilon,
        dmax: d,
        bound,
        bound_satisfied: d <= bound,
    })
}
