use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClusterAssignment, ClusterMethod, ClusterParams};
use crate::error::{Error, Result};
use crate::reduce::ReducedMatrix;

pub const DEFAULT_KMEANS_ITERS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    pub centroids: Array2<f64>,
    /// Sum of squared distances after each assignment step.
    pub sse_trace: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    centroids
        .outer_iter()
        .enumerate()
        .map(|(c, cent)| (c, sq_dist(point, cent)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// The point farthest from its own centroid among clusters with more than one member.
fn farthest_spare(
    rows: &Array2<f64>,
    labels: &[usize],
    counts: &[usize],
    centroids: &Array2<f64>,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in labels.iter().enumerate() {
        if counts[l] < 2 {
            continue;
        }
        let d = sq_dist(rows.row(i), centroids.row(l));
        if best.is_none_or(|b| d > b.1) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

/// k-means++ seeding: first centre uniform, the rest by squared-distance sampling.
fn plus_plus(rows: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = rows.nrows();
    let mut centroids = Array2::zeros((k, rows.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&rows.row(first));
    let mut d2: Vec<f64> = rows
        .outer_iter()
        .map(|r| sq_dist(r, rows.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&rows.row(pick));
        for (i, r) in rows.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, rows.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm from a seeded k-means++ start. Stops when no assignment
/// changes or after `iters` assignment steps.
pub fn kmeans_fit(m: &ReducedMatrix, k: usize, iters: usize, seed: u64) -> Result<KMeansFit> {
    let rows = &m.rows;
    let n = rows.nrows();
    if k == 0 || k > n {
        return Err(Error::param(format!("k={k} must lie in 1..={n}")));
    }
    if iters == 0 {
        return Err(Error::param("iters must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(rows, k, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    let mut converged = false;

    for _ in 0..iters {
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest(rows.row(i), &centroids))
            .collect();
        let changed = assigned.iter().zip(&labels).any(|(a, &l)| a.0 != l);
        sse_trace.push(assigned.iter().map(|a| a.1).sum());
        for (l, a) in labels.iter_mut().zip(&assigned) {
            *l = a.0;
        }
        if !changed {
            converged = true;
            break;
        }

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.outer_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(1.0, &r);
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        // Reseed each empty cluster at the point farthest from its centroid,
        // taken only from clusters that can spare a member.
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        for c in empty {
            if let Some(i) = farthest_spare(rows, &labels, &counts, &centroids) {
                counts[labels[i]] -= 1;
                counts[c] += 1;
                centroids.row_mut(c).assign(&rows.row(i));
            }
        }
    }

    // Degenerate inputs (duplicate points) can still tie an empty centroid;
    // hand it the farthest spare point directly.
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    for c in empty {
        if let Some(i) = farthest_spare(rows, &labels, &counts, &centroids) {
            counts[labels[i]] -= 1;
            counts[c] += 1;
            labels[i] = c;
            centroids.row_mut(c).assign(&rows.row(i));
        }
    }

    let assignment = ClusterAssignment {
        item_ids: m.item_ids.clone(),
        labels: labels.iter().map(|&l| l as i64).collect(),
        k,
        method: ClusterMethod::Kmeans,
        params: ClusterParams::Kmeans { k, iters, seed },
    };
    Ok(KMeansFit {
        assignment,
        centroids,
        sse_trace,
        converged,
    })
}

pub fn kmeans(m: &ReducedMatrix, k: usize, iters: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_fit(m, k, iters, seed).map(|f| f.assignment)
}
