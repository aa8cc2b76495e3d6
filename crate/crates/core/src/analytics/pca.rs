use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("need at least two points to project, got {0}")]
    TooFewPoints(usize),
    #[error("embedding dimensions disagree")]
    DimMismatch,
}

/// 2-D coordinates for every input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// The two principal directions (rows), unit length.
    pub components: [Vec<f64>; 2],
    /// Sum of squared centered coordinates along each component.
    pub explained: [f64; 2],
    /// All points coincide; every coordinate is zero.
    pub degenerate: bool,
}

/// Projects mean-centered rows onto the top two principal directions.
///
/// The directions are the top right singular vectors of the centered data,
/// taken from the eigendecomposition of its Gram matrix. Each direction is
/// signed so that its largest-magnitude loading is positive.
pub fn pca_project(embeddings: &[Vec<f64>]) -> Result<Projection, ProjectionError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(ProjectionError::TooFewPoints(n));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(ProjectionError::DimMismatch);
    }
    let mut mean = vec![0.0; d];
    for e in embeddings {
        mean.iter_mut().zip(e).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| embeddings[i][j] - mean[j]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(Projection {
            coords: vec![[0.0, 0.0]; n],
            components: [vec![0.0; d], vec![0.0; d]],
            explained: [0.0, 0.0],
            degenerate: true,
        });
    }

    // eigenvectors of X^T X when d is small, otherwise recover them from the
    // n x n Gram matrix X X^T
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(2);
    if d <= n {
        let gram = x.transpose() * &x;
        let eig = SymmetricEigen::new(gram);
        for idx in top_indices(eig.eigenvalues.as_slice(), 2) {
            directions.push(eig.eigenvectors.column(idx).iter().copied().collect());
        }
    } else {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        for idx in top_indices(eig.eigenvalues.as_slice(), 2) {
            let u = eig.eigenvectors.column(idx);
            let v = x.transpose() * u;
            let norm = v.norm();
            directions.push(if norm > 0.0 {
                (v / norm).iter().copied().collect()
            } else {
                vec![0.0; d]
            });
        }
    }
    while directions.len() < 2 {
        directions.push(vec![0.0; d]);
    }
    for dir in &mut directions {
        let pivot = dir
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0;
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let row = x.row(i);
            let proj = |dir: &[f64]| row.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
            [proj(&directions[0]), proj(&directions[1])]
        })
        .collect();
    let explained = [
        coords.iter().map(|c| c[0] * c[0]).sum(),
        coords.iter().map(|c| c[1] * c[1]).sum(),
    ];
    let second = directions.pop().unwrap();
    let first = directions.pop().unwrap();
    Ok(Projection {
        coords,
        components: [first, second],
        explained,
        degenerate: false,
    })
}

/// Indices of the `count` largest values, largest first; ties by index.
fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}
