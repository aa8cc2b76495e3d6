//! Synthetic data distributions with known support diameter and density floor.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::model::{Dataset, Record};
use crate::rng::{derive_seed, rng_from_seed};

/// Probability that a synthetic label disagrees with its component.
pub const LABEL_FLIP_PROBABILITY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    /// Equal-weight mixture of axis-aligned uniform boxes.
    UniformBoxes,
    /// Equal-weight mixture of isotropic gaussians, truncated to `[0, 1]^d`.
    TruncatedGaussian,
}

/// One mixture component: box half-width or gaussian standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub center: Vec<f64>,
    pub width: f64,
}

/// An equal-weight mixture supported inside the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    pub name: String,
    pub kind: DistributionKind,
    pub dim: usize,
    pub components: Vec<Component>,
    /// Upper bound on the support diameter.
    pub diameter: f64,
    /// Lower bound on the density over the support.
    pub density_floor: f64,
}

/// One draw: the point and the component it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: Vec<f64>,
    pub component: usize,
}

impl SyntheticDistribution {
    /// Disjoint uniform boxes inside the unit cube.
    pub fn uniform_boxes(name: &str, components: Vec<Component>) -> Result<Self, StabilityError> {
        let dim = check_components(&components)?;
        for c in &components {
            if c.center.iter().any(|&x| x - c.width < 0.0 || x + c.width > 1.0) {
                return Err(StabilityError::InvalidDistribution(format!(
                    "box around {:?} leaves the unit cube",
                    c.center
                )));
            }
        }
        let weight = 1.0 / components.len() as f64;
        // boxes are assumed disjoint, so the floor is the thinnest box density
        let density_floor = components
            .iter()
            .map(|c| weight / (2.0 * c.width).powi(dim as i32))
            .fold(f64::INFINITY, f64::min);
        Ok(SyntheticDistribution {
            name: name.to_string(),
            kind: DistributionKind::UniformBoxes,
            dim,
            components,
            diameter: (dim as f64).sqrt(),
            density_floor,
        })
    }

    pub fn truncated_gaussian(name: &str, components: Vec<Component>) -> Result<Self, StabilityError> {
        let dim = check_components(&components)?;
        let weight = 1.0 / components.len() as f64;
        // truncation only raises the density, so the untruncated mixture at
        // each component's farthest cube corner is a valid floor
        let density_floor = components
            .iter()
            .map(|c| {
                let far_sq: f64 = c.center.iter().map(|&x| x.max(1.0 - x).powi(2)).sum();
                let s2 = c.width * c.width;
                weight * (2.0 * std::f64::consts::PI * s2).powf(-(dim as f64) / 2.0)
                    * (-far_sq / (2.0 * s2)).exp()
            })
            .sum();
        Ok(SyntheticDistribution {
            name: name.to_string(),
            kind: DistributionKind::TruncatedGaussian,
            dim,
            components,
            diameter: (dim as f64).sqrt(),
            density_floor,
        })
    }

    /// Uniform on the unit square.
    pub fn uniform_square() -> Self {
        Self::uniform_boxes(
            "uniform_square",
            vec![Component {
                center: vec![0.5, 0.5],
                width: 0.5,
            }],
        )
        .expect("valid")
    }

    /// Three well-separated uniform boxes in the unit square.
    pub fn blobs3() -> Self {
        let centers = [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]];
        Self::uniform_boxes(
            "blobs3",
            centers
                .iter()
                .map(|c| Component {
                    center: c.to_vec(),
                    width: 0.1,
                })
                .collect(),
        )
        .expect("valid")
    }

    /// The same three centers as [`blobs3`](Self::blobs3) with gaussian spread.
    pub fn gauss3() -> Self {
        let centers = [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]];
        Self::truncated_gaussian(
            "gauss3",
            centers
                .iter()
                .map(|c| Component {
                    center: c.to_vec(),
                    width: 0.05,
                })
                .collect(),
        )
        .expect("valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "blobs3" => Some(Self::blobs3()),
            "gauss3" => Some(Self::gauss3()),
            "uniform_square" => Some(Self::uniform_square()),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let component = rng.random_range(0..self.components.len());
        let c = &self.components[component];
        let point = match self.kind {
            DistributionKind::UniformBoxes => c
                .center
                .iter()
                .map(|&x| x + c.width * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
            DistributionKind::TruncatedGaussian => {
                let normal = Normal::new(0.0, c.width).expect("positive width");
                c.center
                    .iter()
                    .map(|&x| loop {
                        let v = x + normal.sample(rng);
                        if (0.0..=1.0).contains(&v) {
                            break v;
                        }
                    })
                    .collect()
            }
        };
        Sample { point, component }
    }

    /// Distance from `point` to the nearest component center.
    pub fn nearest_center_distance(&self, point: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| crate::explanation::euclidean(&c.center, point))
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_components(components: &[Component]) -> Result<usize, StabilityError> {
    let first = components
        .first()
        .ok_or_else(|| StabilityError::InvalidDistribution("no components".into()))?;
    let dim = first.center.len();
    if dim == 0 {
        return Err(StabilityError::InvalidDistribution("zero dimension".into()));
    }
    for c in components {
        if c.center.len() != dim {
            return Err(StabilityError::InvalidDistribution("component dimensions differ".into()));
        }
        if !(c.width > 0.0 && c.width.is_finite()) {
            return Err(StabilityError::InvalidDistribution("width must be positive".into()));
        }
        if c.center.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(StabilityError::InvalidDistribution("center outside the unit cube".into()));
        }
    }
    Ok(dim)
}

/// `S` is `n` i.i.d. draws; `T` is `S` with `m` distinct positions replaced
/// by fresh draws.
pub fn sample_paired_datasets(
    dist: &SyntheticDistribution,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>), StabilityError> {
    if n == 0 || m >= n {
        return Err(StabilityError::InvalidPerturbation { m, n });
    }
    let mut rng = rng_from_seed(seed);
    let s: Vec<Sample> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let mut t = s.clone();
    let mut positions = index::sample(&mut rng, n, m).into_vec();
    positions.sort_unstable();
    for p in positions {
        t[p] = dist.sample(&mut rng);
    }
    Ok((s, t))
}

/// Uniform in `[0, 1)` from the bits of `point`, keyed by `seed`.
fn point_uniform(seed: u64, point: &[f64]) -> f64 {
    let h = point
        .iter()
        .fold(seed, |acc, x| derive_seed(acc, x.to_bits()));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Turns samples into a dataset: the prediction is the source component,
/// the label is that component flipped to the next class with probability
/// [`LABEL_FLIP_PROBABILITY`], and the loss is the distance to the nearest
/// component center. The flip is a pure function of the component, the
/// point and `label_seed`, so points shared by two samples get equal labels.
pub fn synthetic_dataset(dist: &SyntheticDistribution, samples: &[Sample], label_seed: u64) -> Dataset {
    let classes = dist.components.len().max(2);
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let flip = point_uniform(derive_seed(label_seed, s.component as u64), &s.point)
                < LABEL_FLIP_PROBABILITY;
            Record {
                id: format!("p{i}"),
                text: format!("component {}", s.component),
                label: if flip { (s.component + 1) % classes } else { s.component },
                prediction: s.component,
                loss: dist.nearest_center_distance(&s.point),
                embedding: s.point.clone(),
            }
        })
        .collect();
    Dataset {
        name: dist.name.clone(),
        num_classes: classes,
        embedding_dim: dist.dim,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;

    #[test]
    fn blobs3_parameters() {
        let d = SyntheticDistribution::blobs3();
        assert_eq!(d.dim, 2);
        assert!((d.diameter - 2f64.sqrt()).abs() < 1e-15);
        // weight 1/3 over a 0.2 x 0.2 box
        assert!((d.density_floor - (1.0 / 3.0) / 0.04).abs() < 1e-9);
    }

    #[test]
    fn samples_stay_in_support() {
        let mut rng = rng_from_seed(3);
        for dist in [SyntheticDistribution::blobs3(), SyntheticDistribution::gauss3()] {
            for _ in 0..2000 {
                let s = dist.sample(&mut rng);
                assert!(s.point.iter().all(|x| (0.0..=1.0).contains(x)));
                if dist.kind == DistributionKind::UniformBoxes {
                    let c = &dist.components[s.component];
                    assert!(s.point.iter().zip(&c.center).all(|(x, m)| (x - m).abs() <= c.width));
                }
            }
        }
    }

    #[test]
    fn zero_perturbation_is_identical() {
        let d = SyntheticDistribution::blobs3();
        let (s, t) = sample_paired_datasets(&d, 50, 0, 1).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn differing_points_bounded() {
        let d = SyntheticDistribution::blobs3();
        for seed in 0..20 {
            let (s, t) = sample_paired_datasets(&d, 100, 3, seed).unwrap();
            let differing = s.iter().zip(&t).filter(|(a, b)| a != b).count();
            assert!(differing <= 3);
        }
    }

    #[test]
    fn perturbation_must_be_smaller_than_n() {
        let d = SyntheticDistribution::blobs3();
        assert!(matches!(
            sample_paired_datasets(&d, 5, 5, 0),
            Err(StabilityError::InvalidPerturbation { m: 5, n: 5 })
        ));
    }

    #[test]
    fn synthetic_dataset_is_valid_and_labels_follow_points() {
        let d = SyntheticDistribution::blobs3();
        let (s, t) = sample_paired_datasets(&d, 400, 5, 8).unwrap();
        let ds = synthetic_dataset(&d, &s, 77);
        let dt = synthetic_dataset(&d, &t, 77);
        assert!(validate_dataset(&ds).is_empty());
        for (a, b) in ds.records.iter().zip(&dt.records) {
            if a.embedding == b.embedding {
                assert_eq!(a.label, b.label);
            }
        }
        let flipped = ds.records.iter().filter(|r| r.label != r.prediction).count() as f64 / 400.0;
        assert!((flipped - LABEL_FLIP_PROBABILITY).abs() < 0.06, "flip rate {flipped}");
    }

    #[test]
    fn by_name_lookup() {
        assert!(SyntheticDistribution::by_name("blobs3").is_some());
        assert!(SyntheticDistribution::by_name("nope").is_none());
    }
}
