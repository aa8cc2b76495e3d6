//! Empirical stability harness.
//!
//! Two samples `S` and `T` of size `n` that differ in `m = floor(n^gamma)`
//! points are pushed through clustering and explanation-tuple construction;
//! the harness records how far apart the two tuples end up and whether the
//! center-to-tuple propagation bound held.

mod distribution;
mod experiment;
mod lipschitz;
mod trial;

pub use distribution::{
    sample_paired_datasets, synthetic_dataset, Component, DistributionKind, Sample, SyntheticDistribution,
    LABEL_FLIP_PROBABILITY,
};
pub use experiment::{
    convergence_experiment, kendall_tau, median, percentile, ConvergenceReport, DeltaFraction, ExperimentConfig,
    SizeSummary, CSV_HEADER,
};
pub use lipschitz::{estimate_lipschitz, LipschitzLabeler, MIN_PAIR_DISTANCE};
pub use trial::{
    center_dmax, perturbation_bound, perturbation_size, run_trial, ClusteringMode, StabilityTrial, TrialConfig,
};

use crate::clustering::ClusteringError;
use crate::explanation::ExplanationError;

#[derive(Debug, thiserror::Error)]
pub enum StabilityError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("perturbation size m = {m} must be smaller than n = {n}")]
    InvalidPerturbation { m: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Explanation(#[from] ExplanationError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}
