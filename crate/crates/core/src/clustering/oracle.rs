//! Exact k-means by exhaustive search over set partitions. Only usable on
//! tiny inputs; serves as ground truth for the heuristic clusterer.

use super::kmeans::{centroids, within_point_scatter};
use super::ClusteringError;
use crate::model::KMeansFit;

pub const ORACLE_MAX_POINTS: usize = 14;
pub const ORACLE_MAX_K: usize = 4;

struct Group {
    count: usize,
    sum: Vec<f64>,
    sumsq: f64,
}

impl Group {
    fn cost(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let norm: f64 = self.sum.iter().map(|s| s * s).sum();
        (self.sumsq - norm / self.count as f64).max(0.0)
    }
}

struct Search<'a> {
    points: &'a [Vec<f64>],
    k: usize,
    groups: Vec<Group>,
    labels: Vec<usize>,
    best: f64,
    best_labels: Vec<usize>,
}

impl Search<'_> {
    fn partial_cost(&self) -> f64 {
        self.groups.iter().map(Group::cost).sum()
    }

    // Restricted growth strings: point i may join any used group or open
    // the next one, so each partition is visited exactly once.
    fn descend(&mut self, i: usize, used: usize) {
        let n = self.points.len();
        if i == n {
            if used == self.k {
                let cost = self.partial_cost();
                if cost < self.best {
                    self.best = cost;
                    self.best_labels = self.labels.clone();
                }
            }
            return;
        }
        if n - i < self.k - used {
            return;
        }
        // scatter only grows as points are added, so partial cost bounds
        // every completion from below
        if self.partial_cost() > self.best * (1.0 + 1e-12) {
            return;
        }
        let limit = (used + 1).min(self.k);
        for g in 0..limit {
            let p = &self.points[i];
            let group = &mut self.groups[g];
            group.count += 1;
            group.sumsq += p.iter().map(|x| x * x).sum::<f64>();
            group.sum.iter_mut().zip(p).for_each(|(s, x)| *s += x);
            self.labels[i] = g;
            self.descend(i + 1, used.max(g + 1));
            let group = &mut self.groups[g];
            group.count -= 1;
            group.sumsq -= p.iter().map(|x| x * x).sum::<f64>();
            group.sum.iter_mut().zip(p).for_each(|(s, x)| *s -= x);
        }
    }
}

/// Globally optimal k-means partition for at most 14 points and k <= 4.
pub fn exact_kmeans_oracle(points: &[Vec<f64>], k: usize) -> Result<KMeansFit, ClusteringError> {
    let n = points.len();
    if n > ORACLE_MAX_POINTS || k > ORACLE_MAX_K {
        return Err(ClusteringError::TooLarge { n, k });
    }
    if n == 0 {
        return Err(ClusteringError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusteringError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ClusteringError::DimMismatch);
    }
    let mut search = Search {
        points,
        k,
        groups: (0..k)
            .map(|_| Group {
                count: 0,
                sum: vec![0.0; dim],
                sumsq: 0.0,
            })
            .collect(),
        labels: vec![0; n],
        best: f64::INFINITY,
        best_labels: Vec::new(),
    };
    search.descend(0, 0);
    let assignments = search.best_labels;
    let centers = centroids(points, &assignments, &vec![vec![0.0; dim]; k]);
    let objective = within_point_scatter(points, &assignments, &centers);
    Ok(KMeansFit {
        k,
        assignments,
        centers,
        objective,
        iterations: 0,
        degenerate: super::kmeans::distinct_count(points, k) < k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn three_pairs() {
        let p = pts(&[0.0, 0.1, 5.0, 5.1, 10.0, 10.1]);
        let fit = exact_kmeans_oracle(&p, 3).unwrap();
        assert_eq!(fit.assignments, vec![0, 0, 1, 1, 2, 2]);
        let centers: Vec<f64> = fit.centers.iter().map(|c| c[0]).collect();
        for (c, e) in centers.iter().zip([0.05, 5.05, 10.05]) {
            assert!((c - e).abs() < 1e-12);
        }
        assert!((fit.objective - 0.015).abs() < 1e-12);
    }

    #[test]
    fn k_one_is_total_scatter() {
        let p = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.0, 0.0], vec![4.0, 4.0]];
        let fit = exact_kmeans_oracle(&p, 1).unwrap();
        assert_eq!(fit.centers[0], vec![2.0, 1.25]);
        let total: f64 = p
            .iter()
            .map(|q| (q[0] - 2.0).powi(2) + (q[1] - 1.25).powi(2))
            .sum();
        assert!((fit.objective - total).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        assert_eq!(
            exact_kmeans_oracle(&pts(&[0.0; 15]), 2),
            Err(ClusteringError::TooLarge { n: 15, k: 2 })
        );
        assert_eq!(
            exact_kmeans_oracle(&pts(&[0.0; 6]), 5),
            Err(ClusteringError::TooLarge { n: 6, k: 5 })
        );
    }

    #[test]
    fn matches_naive_enumeration() {
        // independent check: all k^n labelings, keeping those with k groups
        let p = pts(&[0.3, 1.9, 2.2, 4.0, 4.1, 7.7, 8.0]);
        let k: usize = 3;
        let n = p.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let labels: Vec<usize> = (0..n)
                .map(|_| {
                    let l = c % k;
                    c /= k;
                    l
                })
                .collect();
            if (0..k).any(|g| !labels.contains(&g)) {
                continue;
            }
            let mut w = 0.0;
            for g in 0..k {
                let xs: Vec<f64> = (0..n).filter(|&i| labels[i] == g).map(|i| p[i][0]).collect();
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                w += xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            best = best.min(w);
        }
        let fit = exact_kmeans_oracle(&p, k).unwrap();
        assert!((fit.objective - best).abs() <= 1e-12 * best.max(1.0));
    }
}
