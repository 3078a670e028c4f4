use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use super::{ReduceMethod, ReducedMatrix};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

/// A fitted principal component basis.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `k × dim`, orthonormal rows, sign-fixed so the largest-magnitude
    /// loading of each component is positive.
    pub components: Array2<f64>,
    /// Fraction of total variance per component, descending.
    pub explained_variance_ratio: Vec<f64>,
    pub projection: ReducedMatrix,
}

/// Eigendecomposition of the sample covariance; keeps the top `k` directions.
pub fn pca_fit(m: &EmbeddingMatrix, k: usize) -> Result<Pca> {
    let (n, dim) = (m.len(), m.dim());
    if n < 2 {
        return Err(Error::param(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(dim) {
        return Err(Error::param(format!(
            "PCA k={k} out of range 1..={}",
            n.min(dim)
        )));
    }
    let mean = m.rows().mean_axis(Axis(0)).expect("nonempty");
    let centered = m.rows() - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let cov = DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Array2::zeros((k, dim));
    let mut ratios = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..dim)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .expect("dim > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..dim {
            components[[c, j]] = sign * col[j];
        }
        let var = eig.eigenvalues[idx].max(0.0);
        ratios.push(if total > 0.0 { var / total } else { 0.0 });
    }
    let coords = centered.dot(&components.t());
    Ok(Pca {
        mean,
        components,
        explained_variance_ratio: ratios,
        projection: ReducedMatrix {
            item_ids: m.item_ids().to_vec(),
            rows: coords,
            method: ReduceMethod::Pca,
            seed: 0,
        },
    })
}

pub fn pca(m: &EmbeddingMatrix, k: usize) -> Result<ReducedMatrix> {
    pca_fit(m, k).map(|p| p.projection)
}
