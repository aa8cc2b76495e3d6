//! k-means++ seeding and Lloyd iteration on dense points.

use rand::Rng;

use super::{ClusteringError, KMeansConfig};
use crate::model::KMeansFit;

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum over points of the squared distance to the assigned center.
pub fn within_point_scatter(points: &[Vec<f64>], assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centers[a]))
        .sum()
}

/// Means of the assigned points. Empty clusters keep their previous center.
pub(crate) fn centroids(
    points: &[Vec<f64>],
    assignments: &[usize],
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let dim = previous.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((mut s, c), prev)| {
            if c == 0 {
                prev.clone()
            } else {
                let inv = c as f64;
                s.iter_mut().for_each(|x| *x /= inv);
                s
            }
        })
        .collect()
}

/// Nearest center for every point; ties go to the lowest center index.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = squared_distance(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the point farthest from its own center, taken
/// from a cluster with at least two members. Returns false if some cluster
/// stays empty (only possible when there are fewer points than clusters).
fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centers: &mut [Vec<f64>]) -> bool {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick = None;
        let mut pick_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_distance(p, &centers[a]);
            if d > pick_d {
                pick_d = d;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { return false };
        sizes[assignments[i]] -= 1;
        assignments[i] = empty;
        sizes[empty] = 1;
        centers[empty] = points[i].clone();
    }
    true
}

/// Outcome of k-means++ seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansInit {
    pub centers: Vec<Vec<f64>>,
    /// Fewer than `k` distinct points: some centers are duplicates.
    pub degenerate: bool,
}

/// Standard k-means++ seeding: the first center is uniform over the points,
/// each subsequent one is drawn with probability proportional to the squared
/// distance to the nearest center chosen so far.
pub fn kmeanspp_init<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<KMeansInit, ClusteringError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusteringError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusteringError::InvalidK { k, n });
    }
    let first = rng.random_range(0..n);
    let mut centers = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    let mut degenerate = false;
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            let mut last_positive = 0;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    last_positive = i;
                }
                acc += w;
                if acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or(last_positive)
        } else {
            // every point coincides with a center already; duplicate the
            // farthest (all distances are zero, so the first) point
            degenerate = true;
            nearest
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
                .0
        };
        centers.push(points[chosen].clone());
        for (p, d) in points.iter().zip(nearest.iter_mut()) {
            let nd = squared_distance(p, &points[chosen]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(KMeansInit {
        centers,
        degenerate,
    })
}

/// Lloyd iteration from `init_centers`, returning the fit and the objective
/// after every assignment step.
pub fn lloyd_traced(
    points: &[Vec<f64>],
    init_centers: &[Vec<f64>],
    config: &KMeansConfig,
) -> Result<(KMeansFit, Vec<f64>), ClusteringError> {
    let n = points.len();
    let k = init_centers.len();
    if n == 0 {
        return Err(ClusteringError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(ClusteringError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if points.iter().chain(init_centers).any(|p| p.len() != dim) {
        return Err(ClusteringError::DimMismatch);
    }

    let mut centers = init_centers.to_vec();
    let mut assignments = assign(points, &centers);
    repair_empty(points, &mut assignments, &mut centers);
    let mut objective = within_point_scatter(points, &assignments, &centers);
    let mut trace = vec![objective];
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        centers = centroids(points, &assignments, &centers);
        let mut next = assign(points, &centers);
        repair_empty(points, &mut next, &mut centers);
        let next_objective = within_point_scatter(points, &next, &centers);
        trace.push(next_objective);
        let changed = next != assignments;
        assignments = next;
        let improvement = objective - next_objective;
        objective = next_objective;
        if !changed || objective == 0.0 || improvement <= config.rel_tol * objective.abs() {
            break;
        }
    }

    let centers = centroids(points, &assignments, &centers);
    let objective = within_point_scatter(points, &assignments, &centers);
    let degenerate = distinct_count(points, k) < k;
    Ok((
        KMeansFit {
            k,
            assignments,
            centers,
            objective,
            iterations,
            degenerate,
        },
        trace,
    ))
}

/// Lloyd iteration from `init_centers` until the relative objective
/// improvement drops below `rel_tol` or `max_iter` is reached.
pub fn lloyd(
    points: &[Vec<f64>],
    init_centers: &[Vec<f64>],
    config: &KMeansConfig,
) -> Result<KMeansFit, ClusteringError> {
    lloyd_traced(points, init_centers, config).map(|(fit, _)| fit)
}

/// Number of distinct points, counting no further than `cap`.
pub(crate) fn distinct_count(points: &[Vec<f64>], cap: usize) -> usize {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= cap {
                break;
            }
        }
    }
    distinct.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn scatter_examples() {
        let p = vec![vec![1.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(within_point_scatter(&p, &[0, 1], &p), 0.0);
        assert_eq!(
            within_point_scatter(&[vec![2.0, 0.0]], &[0], &[vec![0.0, 0.0]]),
            4.0
        );
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = pts(&[1.5; 6]);
        let init = kmeanspp_init(&p, 2, &mut rng_from_seed(3)).unwrap();
        assert!(init.degenerate);
        assert_eq!(init.centers[0], init.centers[1]);
    }

    #[test]
    fn two_points_both_chosen() {
        let p = pts(&[0.0, 100.0]);
        for seed in 0..20 {
            let init = kmeanspp_init(&p, 2, &mut rng_from_seed(seed)).unwrap();
            assert!(!init.degenerate);
            let mut c: Vec<f64> = init.centers.iter().map(|c| c[0]).collect();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.0, 100.0]);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let p: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let a = kmeanspp_init(&p, 5, &mut rng_from_seed(42)).unwrap();
        let b = kmeanspp_init(&p, 5, &mut rng_from_seed(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lloyd_two_pairs() {
        let p = pts(&[0.0, 0.1, 10.0, 10.1]);
        let cfg = KMeansConfig::default();
        let fit = lloyd(&p, &[vec![0.0], vec![10.1]], &cfg).unwrap();
        let mut centers: Vec<f64> = fit.centers.iter().map(|c| c[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert!((centers[0] - 0.05).abs() < 1e-12);
        assert!((centers[1] - 10.05).abs() < 1e-12);
        assert!((fit.objective - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let p = pts(&[3.0, -1.0, 7.5]);
        let fit = lloyd(&p, &p, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.objective, 0.0);
        assert_eq!(fit.centers, p);
    }

    #[test]
    fn optimal_assignment_is_a_fixed_point() {
        let p = pts(&[0.0, 0.1, 10.0, 10.1]);
        let cfg = KMeansConfig {
            max_iter: 1,
            ..KMeansConfig::default()
        };
        let fit = lloyd(&p, &[vec![0.05], vec![10.05]], &cfg).unwrap();
        assert_eq!(fit.assignments, vec![0, 0, 1, 1]);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // both initial centers on the left; the right points all go to one
        let p = pts(&[0.0, 0.2, 9.0, 10.0]);
        let fit = lloyd(&p, &[vec![0.0], vec![0.1], vec![-50.0]], &KMeansConfig::default()).unwrap();
        assert!(fit.cluster_sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn objective_trace_non_increasing() {
        let p: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.91).sin() * 3.0, (i as f64 * 0.13).cos()])
            .collect();
        let init = kmeanspp_init(&p, 4, &mut rng_from_seed(1)).unwrap();
        let (_, trace) = lloyd_traced(&p, &init.centers, &KMeansConfig::default()).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{trace:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = pts(&[1.0]);
        assert_eq!(
            kmeanspp_init(&p, 2, &mut rng_from_seed(0)),
            Err(ClusteringError::InvalidK { k: 2, n: 1 })
        );
        assert_eq!(
            lloyd(&p, &[vec![1.0, 2.0]], &KMeansConfig::default()),
            Err(ClusteringError::DimMismatch)
        );
    }
}
