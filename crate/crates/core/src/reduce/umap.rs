//! UMAP: exact kNN graph, smooth-kNN fuzzy membership, fuzzy union,
//! spectral initialisation and a deterministic SGD layout.
//!
//! kNN and the per-point bandwidth search run in parallel. The SGD loop is
//! single-threaded: every update reads coordinates written by earlier ones,
//! and a fixed update order is what makes a seed reproduce bit for bit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ReduceMethod, ReducedMatrix};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

const SPREAD: f64 = 1.0;
const BISECTION_ITERS: usize = 64;
const BANDWIDTH_TOL: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRAD_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;
/// Dense eigendecomposition is cubic; above this size fall back to noise init.
const SPECTRAL_MAX_POINTS: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_components: usize,
    pub metric: Metric,
    pub seed: u64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 10,
            min_dist: 0.1,
            n_components: 5,
            metric: Metric::Cosine,
            seed: 42,
            n_epochs: 200,
            negative_sample_rate: 5,
        }
    }
}

impl UmapParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::param("n_neighbors must be at least 2"));
        }
        if !(self.min_dist > 0.0 && self.min_dist < 1.0) {
            return Err(Error::param("min_dist must lie in (0, 1)"));
        }
        if self.n_components == 0 {
            return Err(Error::param("n_components must be positive"));
        }
        if self.n_epochs == 0 {
            return Err(Error::param("n_epochs must be positive"));
        }
        Ok(())
    }
}

fn distance(metric: Metric, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        // Rows are pre-normalised for cosine, so this is 1 - cos.
        Metric::Cosine => (1.0 - a.dot(&b)).max(0.0),
    }
}

/// Exact k nearest neighbours (self excluded), sorted by distance then index.
pub fn knn(rows: &Array2<f64>, k: usize, metric: Metric) -> Vec<Vec<(usize, f64)>> {
    let prepared;
    let rows = if metric == Metric::Cosine {
        let mut r = rows.clone();
        for mut row in r.outer_iter_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        prepared = r;
        &prepared
    } else {
        rows
    };
    let n = rows.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, distance(metric, rows.row(i), rows.row(j))))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Per-point `(rho, sigma)`: `rho` is the nearest-neighbour distance and
/// `sigma` solves `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)` by bisection.
pub fn smooth_knn(neighbors: &[Vec<(usize, f64)>]) -> Vec<(f64, f64)> {
    let all_mean = {
        let (s, c) = neighbors
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), &(_, d)| (s + d, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    neighbors
        .par_iter()
        .map(|nbrs| {
            let k = nbrs.len();
            let target = (k as f64).log2();
            let rho = nbrs.first().map_or(0.0, |&(_, d)| d);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..BISECTION_ITERS {
                let psum: f64 = nbrs
                    .iter()
                    .map(|&(_, d)| (-(d - rho).max(0.0) / mid).exp())
                    .sum();
                if (psum - target).abs() < BANDWIDTH_TOL {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() {
                        mid * 2.0
                    } else {
                        (lo + hi) / 2.0
                    };
                }
            }
            let local_mean = if k == 0 {
                0.0
            } else {
                nbrs.iter().map(|&(_, d)| d).sum::<f64>() / k as f64
            };
            let floor = MIN_K_DIST_SCALE * if rho > 0.0 { local_mean } else { all_mean };
            (rho, mid.max(floor))
        })
        .collect()
}

/// Symmetric fuzzy graph as directed edge list `(head, tail, weight)`, both
/// directions present, sorted by `(head, tail)`.
fn fuzzy_graph(neighbors: &[Vec<(usize, f64)>], bandwidths: &[(f64, f64)]) -> Vec<(usize, usize, f64)> {
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, nbrs) in neighbors.iter().enumerate() {
        let (rho, sigma) = bandwidths[i];
        for &(j, d) in nbrs {
            let w = if sigma > 0.0 {
                (-(d - rho).max(0.0) / sigma).exp()
            } else {
                1.0
            };
            directed.insert((i, j), w);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let u = w + wt - w * wt;
        sym.insert((i, j), u);
        sym.insert((j, i), u);
    }
    sym.into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|((i, j), w)| (i, j, w))
        .collect()
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the offset-exponential
/// target curve for `min_dist` (unit spread), by Levenberg-Marquardt.
pub fn fit_curve_params(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / SPREAD).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J and J^T r for the two parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (da, db, r) = if x > 0.0 {
                let p = x.powf(2.0 * b);
                let f = 1.0 / (1.0 + a * p);
                let f2 = f * f;
                (-p * f2, -a * p * 2.0 * x.ln() * f2, f - y)
            } else {
                (0.0, 0.0, 1.0 - y)
            };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        for _ in 0..50 {
            let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m00 * m11 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 {
                sse(na, nb)
            } else {
                f64::INFINITY
            };
            if new_cost < cost {
                let converged = step_a.abs() < 1e-6 * (1.0 + a) && step_b.abs() < 1e-6 * (1.0 + b);
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if converged {
                    return (a, b);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    (a, b)
}

fn noise_init(n: usize, dim: usize, rng: &CounterRng) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |(i, j)| {
        let u = rng.unit(u64::MAX, (i * dim + j) as u64);
        -INIT_EXTENT + 2.0 * INIT_EXTENT * u
    })
}

/// Top non-trivial eigenvectors of the normalised graph Laplacian, scaled so
/// the largest coordinate magnitude is `INIT_EXTENT`.
fn spectral_init(n: usize, dim: usize, edges: &[(usize, usize, f64)]) -> Option<Array2<f64>> {
    if n > SPECTRAL_MAX_POINTS || dim + 1 >= n {
        return None;
    }
    let mut degree = vec![0.0; n];
    for &(i, _, w) in edges {
        degree[i] += w;
    }
    if degree.iter().any(|&d| d <= 0.0) {
        return None;
    }
    // Largest eigenvalues of D^-1/2 W D^-1/2 are the smallest of the Laplacian.
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for &(i, j, w) in edges {
        adj[(i, j)] = w / (degree[i] * degree[j]).sqrt();
    }
    let eig = SymmetricEigen::new(adj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut init = Array2::zeros((n, dim));
    for (c, &idx) in order.iter().skip(1).take(dim).enumerate() {
        let col = eig.eigenvectors.column(idx);
        for i in 0..n {
            init[[i, c]] = col[i];
        }
    }
    let max_abs = init.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !max_abs.is_finite() || max_abs == 0.0 {
        return None;
    }
    init.mapv_inplace(|v| v * INIT_EXTENT / max_abs);
    Some(init)
}

#[inline]
fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

fn optimize_layout(
    emb: &mut Array2<f64>,
    edges: &[(usize, usize, f64)],
    params: &UmapParams,
    a: f64,
    b: f64,
    rng: &CounterRng,
) {
    let n = emb.nrows();
    let dim = emb.ncols();
    let n_epochs = params.n_epochs;
    let max_w = edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    let kept: Vec<(usize, usize, f64)> = edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / n_epochs as f64)
        .collect();
    let epochs_per_sample: Vec<f64> = kept.iter().map(|e| max_w / e.2).collect();
    let neg_rate = params.negative_sample_rate.max(1) as f64;
    let epochs_per_neg: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_neg = epochs_per_neg.clone();
    let mut order: Vec<usize> = (0..kept.len()).collect();
    let mut current = vec![0.0; dim];

    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let ep = epoch as f64;
        // Per-epoch edge order: Fisher-Yates driven by the counter generator.
        let stream = (epoch as u64) << 1;
        for i in (1..order.len()).rev() {
            let j = rng.below(stream, i as u64, i + 1);
            order.swap(i, j);
        }
        for &e in &order {
            if next_sample[e] > ep {
                continue;
            }
            let (head, tail, _) = kept[e];
            for d in 0..dim {
                current[d] = emb[[head, d]];
            }
            let dist_sq: f64 = (0..dim)
                .map(|d| (current[d] - emb[[tail, d]]).powi(2))
                .sum();
            if dist_sq > 0.0 {
                let coeff = -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0);
                for d in 0..dim {
                    let g = clip(coeff * (current[d] - emb[[tail, d]]));
                    current[d] += g * alpha;
                    emb[[tail, d]] -= g * alpha;
                }
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((ep - next_neg[e]) / epochs_per_neg[e]).floor().max(0.0) as usize;
            let neg_stream = ((epoch as u64) << 1) | 1;
            for p in 0..n_neg {
                let k = rng.below(neg_stream, ((e as u64) << 16) | p as u64, n);
                if k == head {
                    continue;
                }
                let dist_sq: f64 = (0..dim)
                    .map(|d| (current[d] - emb[[k, d]]).powi(2))
                    .sum();
                if dist_sq > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0));
                    for d in 0..dim {
                        current[d] += clip(coeff * (current[d] - emb[[k, d]])) * alpha;
                    }
                } else {
                    for c in current.iter_mut() {
                        *c += GRAD_CLIP * alpha;
                    }
                }
            }
            next_neg[e] += n_neg as f64 * epochs_per_neg[e];
            for d in 0..dim {
                emb[[head, d]] = current[d];
            }
        }
    }
}

pub fn umap(m: &EmbeddingMatrix, params: &UmapParams) -> Result<ReducedMatrix> {
    params.validate()?;
    let n = m.len();
    if n <= params.n_neighbors {
        return Err(Error::param(format!(
            "UMAP needs more rows ({n}) than n_neighbors ({})",
            params.n_neighbors
        )));
    }
    if params.n_components > m.dim() {
        return Err(Error::param(format!(
            "n_components {} exceeds input dim {}",
            params.n_components,
            m.dim()
        )));
    }
    let rng = CounterRng::new(params.seed);
    let neighbors = knn(m.rows(), params.n_neighbors, params.metric);
    let bandwidths = smooth_knn(&neighbors);
    let edges = fuzzy_graph(&neighbors, &bandwidths);
    let (a, b) = fit_curve_params(params.min_dist);

    let mut emb = match spectral_init(n, params.n_components, &edges) {
        Some(mut init) => {
            // Jitter breaks exact ties between points with identical eigen-coordinates.
            for (idx, v) in init.iter_mut().enumerate() {
                *v += 1e-4 * (2.0 * rng.unit(u64::MAX - 1, idx as u64) - 1.0);
            }
            init
        }
        None => noise_init(n, params.n_components, &rng),
    };
    optimize_layout(&mut emb, &edges, params, a, b, &rng);
    if emb.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("UMAP layout diverged to non-finite values"));
    }
    Ok(ReducedMatrix {
        item_ids: m.item_ids().to_vec(),
        rows: emb,
        method: ReduceMethod::Umap,
        seed: params.seed,
    })
}
