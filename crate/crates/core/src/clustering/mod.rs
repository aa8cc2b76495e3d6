//! k-means clustering of slice embeddings.
//!
//! The pipeline entry point is [`cluster_slice`]: several seeded k-means++ /
//! Lloyd restarts, keeping the lowest objective. [`subcluster`] recursively
//! splits large clusters and [`exact_kmeans_oracle`] gives the global optimum
//! on tiny inputs.

mod kmeans;
mod oracle;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeanspp_init, lloyd, lloyd_traced, within_point_scatter, KMeansInit};
pub use oracle::{exact_kmeans_oracle, ORACLE_MAX_K, ORACLE_MAX_POINTS};

use crate::model::{Clustering, Dataset, EvalSlice, KMeansFit, Provenance};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusteringError {
    #[error("no points to cluster")]
    EmptyInput,
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("point dimensions disagree")]
    DimMismatch,
    #[error("restarts and max_iter must be positive")]
    InvalidConfig,
    #[error("exact oracle supports at most {max_n} points and k <= {max_k} (got n = {n}, k = {k})", max_n = ORACLE_MAX_POINTS, max_k = ORACLE_MAX_K)]
    TooLarge { n: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    /// Number of clusters; `None` means [`default_k`] of the input size.
    pub k: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the relative objective improvement falls below this.
    pub rel_tol: f64,
    /// L2-normalize embeddings before clustering.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: None,
            seed: 0,
            restarts: 16,
            max_iter: 300,
            rel_tol: 1e-7,
            normalize: false,
        }
    }
}

/// `max(1, round(sqrt(n / 2)))`, never more than `n`.
pub fn default_k(n: usize) -> usize {
    let k = (n as f64 / 2.0).sqrt().round() as usize;
    k.max(1).min(n.max(1))
}

/// Best of `config.restarts` k-means++ + Lloyd runs with seeds
/// `seed, seed + 1, ...`. Ties on the objective keep the lowest restart.
/// Cluster ids follow [`canonical_order`].
pub fn cluster_points(
    points: &[Vec<f64>],
    k: usize,
    config: &KMeansConfig,
) -> Result<KMeansFit, ClusteringError> {
    if config.restarts == 0 || config.max_iter == 0 {
        return Err(ClusteringError::InvalidConfig);
    }
    let runs: Vec<Result<KMeansFit, ClusteringError>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(config.seed.wrapping_add(r as u64));
            let init = kmeanspp_init(points, k, &mut rng)?;
            let mut fit = lloyd(points, &init.centers, config)?;
            fit.degenerate |= init.degenerate;
            Ok(fit)
        })
        .collect();
    let mut best: Option<KMeansFit> = None;
    for run in runs {
        let fit = run?;
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(canonical_order(best.expect("restarts >= 1")))
}

/// Renumbers clusters so their centers are in lexicographic order. Two fits
/// of the same partition then agree on ids regardless of which restart or
/// initial center produced them.
pub fn canonical_order(fit: KMeansFit) -> KMeansFit {
    let mut order: Vec<usize> = (0..fit.k).collect();
    order.sort_by(|&a, &b| {
        fit.centers[a]
            .iter()
            .zip(&fit.centers[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; fit.k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    KMeansFit {
        assignments: fit.assignments.iter().map(|&a| rank[a]).collect(),
        centers: order.iter().map(|&old| fit.centers[old].clone()).collect(),
        ..fit
    }
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Embeddings of `indices` in the space the clusterer works in.
pub fn clustering_points(dataset: &Dataset, indices: &[usize], normalize: bool) -> Vec<Vec<f64>> {
    indices
        .iter()
        .map(|&i| {
            let e = &dataset.records[i].embedding;
            if normalize {
                l2_normalized(e)
            } else {
                e.clone()
            }
        })
        .collect()
}

/// Clusters the members of `slice` by their embeddings.
pub fn cluster_slice(
    dataset: &Dataset,
    slice: &EvalSlice,
    config: &KMeansConfig,
) -> Result<Clustering, ClusteringError> {
    let points = clustering_points(dataset, slice.members(), config.normalize);
    let k = config.k.unwrap_or_else(|| default_k(points.len()));
    let fit = cluster_points(&points, k, config)?;
    Ok(Clustering {
        slice: slice.clone(),
        k: fit.k,
        assignments: fit.assignments,
        centers: fit.centers,
        objective: fit.objective,
        seed: config.seed,
        restarts: config.restarts,
        unsplittable: Vec::new(),
    })
}

struct Splitter<'a> {
    dataset: &'a Dataset,
    config: &'a KMeansConfig,
    max_size: usize,
    splits: u64,
}

impl Splitter<'_> {
    /// Final groups for `members` (dataset indices), each flagged when it
    /// could not be split.
    fn split(&mut self, members: Vec<usize>) -> Result<Vec<(Vec<usize>, bool)>, ClusteringError> {
        if members.len() < self.max_size {
            return Ok(vec![(members, false)]);
        }
        let points = clustering_points(self.dataset, &members, self.config.normalize);
        if points.iter().all(|p| *p == points[0]) {
            return Ok(vec![(members, true)]);
        }
        let k = default_k(members.len()).max(2).min(members.len());
        let seed = derive_seed(self.config.seed, self.splits);
        self.splits += 1;
        let fit = cluster_points(&points, k, &KMeansConfig { seed, ..self.config.clone() })?;
        let mut out = Vec::new();
        for c in 0..fit.k {
            let child: Vec<usize> = members
                .iter()
                .zip(&fit.assignments)
                .filter(|(_, &a)| a == c)
                .map(|(&m, _)| m)
                .collect();
            if !child.is_empty() {
                out.extend(self.split(child)?);
            }
        }
        Ok(out)
    }
}

/// Recursively re-clusters every cluster with `max_size` or more members
/// until all clusters are smaller, or cannot be split because their points
/// coincide (those are listed in `unsplittable`). Child clusters replace
/// their parent in place and ids are renumbered densely.
pub fn subcluster(
    dataset: &Dataset,
    clustering: &Clustering,
    max_size: usize,
    config: &KMeansConfig,
) -> Result<Clustering, ClusteringError> {
    let max_size = max_size.max(2);
    if clustering.cluster_sizes().iter().all(|&s| s < max_size) {
        return Ok(clustering.clone());
    }
    let mut splitter = Splitter {
        dataset,
        config,
        max_size,
        splits: 0,
    };
    let mut groups = Vec::new();
    for c in 0..clustering.k {
        let members = clustering.members_of(c);
        if !members.is_empty() {
            groups.extend(splitter.split(members)?);
        }
    }

    let slice_members = clustering.slice.members();
    let mut assignments = vec![0; slice_members.len()];
    let mut unsplittable = Vec::new();
    for (id, (members, flagged)) in groups.iter().enumerate() {
        for m in members {
            let pos = slice_members.binary_search(m).expect("member of slice");
            assignments[pos] = id;
        }
        if *flagged {
            unsplittable.push(id);
        }
    }
    let points = clustering_points(dataset, slice_members, config.normalize);
    let dim = points.first().map_or(0, Vec::len);
    let centers = kmeans::centroids(&points, &assignments, &vec![vec![0.0; dim]; groups.len()]);
    let objective = within_point_scatter(&points, &assignments, &centers);
    Ok(Clustering {
        slice: clustering.slice.clone(),
        k: groups.len(),
        assignments,
        centers,
        objective,
        seed: clustering.seed,
        restarts: clustering.restarts,
        unsplittable,
    })
}

/// The members of one cluster as a slice of the dataset.
pub fn cluster_as_slice(dataset: &Dataset, clustering: &Clustering, id: usize) -> Option<EvalSlice> {
    EvalSlice::new(
        dataset.name.clone(),
        clustering.members_of(id),
        dataset.len(),
        Provenance::Cluster { cluster_id: id },
    )
    .ok()
}
