//! Sentence-vector maps with a certified Lipschitz constant.

use serde::{Deserialize, Serialize};

use super::{SyntheticDistribution, StabilityError};
use crate::explanation::{euclidean, ClusterView, SentenceEmbedder};
use crate::rng::rng_from_seed;

/// Pairs closer than this are skipped when estimating the constant.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum LipschitzLabeler {
    #[default]
    Identity,
    /// `x -> factor * x`.
    Scaled { factor: f64 },
    /// Coordinatewise `x -> tanh(slope * x)`.
    Tanh { slope: f64 },
}

impl LipschitzLabeler {
    pub fn apply(&self, center: &[f64]) -> Vec<f64> {
        match *self {
            LipschitzLabeler::Identity => center.to_vec(),
            LipschitzLabeler::Scaled { factor } => center.iter().map(|x| factor * x).collect(),
            LipschitzLabeler::Tanh { slope } => center.iter().map(|x| (slope * x).tanh()).collect(),
        }
    }

    /// Analytic Lipschitz constant of [`apply`](Self::apply).
    pub fn beta(&self) -> f64 {
        match *self {
            LipschitzLabeler::Identity => 1.0,
            LipschitzLabeler::Scaled { factor } => factor.abs(),
            LipschitzLabeler::Tanh { slope } => slope.abs(),
        }
    }
}

impl SentenceEmbedder for LipschitzLabeler {
    fn embed(&self, cluster: &ClusterView<'_>) -> Result<Vec<f64>, String> {
        Ok(self.apply(cluster.center))
    }
}

/// Largest `|f(u) - f(v)| / |u - v|` over all pairs of `samples` points drawn
/// from `dist`. Always a lower bound on the true constant.
pub fn estimate_lipschitz(
    labeler: &LipschitzLabeler,
    dist: &SyntheticDistribution,
    samples: usize,
    seed: u64,
) -> Result<f64, StabilityError> {
    if samples < 2 {
        return Err(StabilityError::InvalidConfig("need at least two samples".into()));
    }
    let mut rng = rng_from_seed(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| dist.sample(&mut rng).point).collect();
    let images: Vec<Vec<f64>> = points.iter().map(|p| labeler.apply(p)).collect();
    let mut best: f64 = 0.0;
    for i in 0..samples {
        for j in i + 1..samples {
            let d = euclidean(&points[i], &points[j]);
            if d < MIN_PAIR_DISTANCE {
                continue;
            }
            best = best.max(euclidean(&images[i], &images[j]) / d);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_one() {
        let d = SyntheticDistribution::uniform_square();
        let b = estimate_lipschitz(&LipschitzLabeler::Identity, &d, 50, 1).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_is_factor() {
        let d = SyntheticDistribution::blobs3();
        let b = estimate_lipschitz(&LipschitzLabeler::Scaled { factor: 2.0 }, &d, 50, 1).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_below_slope() {
        let l = LipschitzLabeler::Tanh { slope: 3.0 };
        let d = SyntheticDistribution::uniform_square();
        let b = estimate_lipschitz(&l, &d, 200, 4).unwrap();
        assert!(b <= l.beta() + 1e-9);
        assert!(b > 0.0);
    }

    #[test]
    fn needs_two_samples() {
        let d = SyntheticDistribution::blobs3();
        assert!(estimate_lipschitz(&LipschitzLabeler::Identity, &d, 1, 0).is_err());
    }
}
