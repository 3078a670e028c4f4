#![allow(dead_code)]

use crosstopic::embed::EmbeddingMatrix;
use crosstopic::reduce::{ReduceMethod, ReducedMatrix};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Isotropic Gaussian blobs with centres spaced `sep` apart along a
/// diagonal. Returns rows and true labels.
pub fn blobs(per: &[usize], dim: usize, sigma: f64, sep: f64, seed: u64) -> (Array2<f64>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let n: usize = per.iter().sum();
    let mut rows = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    let mut r = 0;
    for (c, &count) in per.iter().enumerate() {
        for _ in 0..count {
            for j in 0..dim {
                let centre = if j % per.len() == c { sep } else { 0.0 };
                rows[[r, j]] = centre + 1.0 + noise.sample(&mut rng);
            }
            labels.push(c as i64);
            r += 1;
        }
    }
    (rows, labels)
}

pub fn uniform(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| rng.random_range(lo..hi))
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("d{i}")).collect()
}

pub fn emb(rows: Array2<f64>) -> EmbeddingMatrix {
    EmbeddingMatrix::new(ids(rows.nrows()), rows).unwrap()
}

pub fn reduced(rows: Array2<f64>) -> ReducedMatrix {
    ReducedMatrix {
        item_ids: ids(rows.nrows()),
        rows,
        method: ReduceMethod::Pca,
        seed: 0,
    }
}

/// Fraction of points whose cluster's majority true label equals their own.
pub fn purity(pred: &[i64], truth: &[i64]) -> f64 {
    use std::collections::BTreeMap;
    let mut table: BTreeMap<i64, BTreeMap<i64, usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry(p).or_default().entry(t).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| *m.values().max().unwrap()).sum();
    hits as f64 / pred.len() as f64
}

pub fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
