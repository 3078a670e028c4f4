//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use crosstopic::cluster::{
    core_distances, hdbscan, hdbscan_fit, kmeans_fit, minimum_spanning_tree, mutual_reachability,
    HdbscanParams, NOISE,
};
use crosstopic::coherence::{npmi, WindowIndex};
use crosstopic::compare::similarity;
use crosstopic::embed::{read_embeddings, EmbeddingMatrix};
use crosstopic::lda::{fit_bags, LdaModel};
use crosstopic::reduce::{pca_fit, umap, ReduceMethod, ReducedMatrix, Reducer, UmapParams};
use crosstopic::topics::{
    build_topic_model, reduce_topics, topic_model_from_json, topic_model_to_json, Provenance,
    TopicModel,
};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "npmi matches brute-force window oracle",
            limit: Some(Duration::from_secs(5)),
            run: npmi_oracle,
        },
        Criterion {
            name: "hdbscan recovers two blobs among noise",
            limit: Some(Duration::from_secs(10)),
            run: hdbscan_recovery,
        },
        Criterion {
            name: "kmeans sse monotone and 3-blob recovery",
            limit: Some(Duration::from_secs(5)),
            run: kmeans_criteria,
        },
        Criterion {
            name: "pca agrees with svd",
            limit: None,
            run: pca_vs_svd,
        },
        Criterion {
            name: "umap determinism and neighbourhood preservation",
            limit: Some(Duration::from_secs(60)),
            run: umap_criteria,
        },
        Criterion {
            name: "lda elbo, recovery and exact likelihood",
            limit: Some(Duration::from_secs(60)),
            run: lda_criteria,
        },
        Criterion {
            name: "compare self, transpose and scaling",
            limit: None,
            run: compare_criteria,
        },
        Criterion {
            name: "end-to-end determinism and coherence on fixtures",
            limit: Some(Duration::from_secs(300)),
            run: end_to_end,
        },
        Criterion {
            name: "topic centroids hold after every stage",
            limit: None,
            run: centroid_invariant,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!(
                "took {:.2}s, limit {}s",
                elapsed.as_secs_f64(),
                limit.as_secs()
            )),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!(
                "PASS  {}  ({detail}; {:.2}s)",
                c.name,
                elapsed.as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}  ({why}; {:.2}s)", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

fn reduced(rows: Array2<f64>) -> ReducedMatrix {
    ReducedMatrix {
        item_ids: ids(rows.nrows()),
        rows,
        method: ReduceMethod::Pca,
        seed: 0,
    }
}

/// Gaussian blobs around the given centres. Returns rows and true labels.
fn blobs(centres: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Array2<f64>, Vec<i64>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let dim = centres[0].len();
    let mut rows = Array2::zeros((centres.len() * per, dim));
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for i in 0..per {
            for j in 0..dim {
                rows[[c * per + i, j]] = centre[j] + noise.sample(&mut r);
            }
            labels.push(c as i64);
        }
    }
    (rows, labels)
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the contingency table.
fn ari(a: &[i64], b: &[i64]) -> f64 {
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut ra: HashMap<i64, u64> = HashMap::new();
    let mut rb: HashMap<i64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sa: f64 = ra.values().map(|&n| choose2(n)).sum();
    let sb: f64 = rb.values().map(|&n| choose2(n)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    (index - expected) / ((sa + sb) / 2.0 - expected)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn vec_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn dirichlet(r: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let draws: Vec<f64> = (0..n).map(|_| g.sample(r).max(1e-300)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / s).collect()
}

fn categorical(r: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

// ---------------------------------------------------------------- NPMI

/// Every window as a set of words, enumerated directly: a document no longer
/// than the window is one window, otherwise every stride-1 slice of `size`
/// tokens.
fn enumerate_windows(docs: &[Vec<String>], size: usize) -> Vec<BTreeSet<String>> {
    let mut out = Vec::new();
    for d in docs {
        if d.len() <= size {
            out.push(d.iter().cloned().collect());
        } else {
            for s in 0..=d.len() - size {
                out.push(d[s..s + size].iter().cloned().collect());
            }
        }
    }
    out
}

fn oracle_npmi(windows: &[BTreeSet<String>], a: &str, b: &str, eps: f64) -> (f64, f64, f64, f64) {
    let n = windows.len() as f64;
    let pa = windows.iter().filter(|w| w.contains(a)).count() as f64 / n;
    let pb = windows.iter().filter(|w| w.contains(b)).count() as f64 / n;
    let pab = windows
        .iter()
        .filter(|w| w.contains(a) && w.contains(b))
        .count() as f64
        / n;
    let v = ((pab + eps) / (pa.max(eps) * pb.max(eps))).ln() / -(pab + eps).ln();
    (pa, pb, pab, v)
}

fn npmi_oracle() -> Outcome {
    let mut r = rng(1);
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    // Skewed word frequencies so that both rare and common pairs occur.
    let weights: Vec<f64> = (0..40).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let docs: Vec<Vec<String>> = (0..50)
        .map(|_| {
            let len = r.random_range(1..=30);
            (0..len)
                .map(|_| vocab[categorical(&mut r, &p)].clone())
                .collect()
        })
        .collect();
    let eps = 1e-12;
    let mut checked = 0;
    for size in [110, 10, 3] {
        let idx = WindowIndex::from_token_docs(&docs, size, 1).map_err(|e| e.to_string())?;
        let windows = enumerate_windows(&docs, size);
        ensure!(
            idx.virtual_doc_count() == windows.len() as u64,
            "window count differs at size {size}"
        );
        for (i, a) in vocab.iter().enumerate() {
            for b in &vocab[i + 1..] {
                let (pa, pb, pab, want) = oracle_npmi(&windows, a, b, eps);
                let got = (
                    idx.probability(a),
                    idx.probability(b),
                    idx.joint_probability(a, b),
                );
                ensure!(
                    (got.0 - pa).abs() <= 1e-12 && (got.1 - pb).abs() <= 1e-12,
                    "P({a}) or P({b}) off"
                );
                ensure!(
                    (got.2 - pab).abs() <= 1e-12,
                    "P({a},{b}) = {} vs {pab}",
                    got.2
                );
                if pa > 0.0 && pb > 0.0 {
                    let v = npmi(a, b, &idx, eps);
                    ensure!(
                        (v - want).abs() <= 1e-12,
                        "NPMI({a},{b}) = {v} vs {want} at size {size}"
                    );
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} NPMI values at window sizes 110, 10, 3"))
}

// ---------------------------------------------------------------- HDBSCAN

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut y = x;
        while self.0[y] != root {
            let next = self.0[y];
            self.0[y] = root;
            y = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// k-th nearest-neighbour distance (self excluded) by sorting all distances.
fn oracle_core(rows: &Array2<f64>, k: usize) -> Vec<f64> {
    (0..rows.nrows())
        .map(|i| {
            let mut d: Vec<f64> = (0..rows.nrows())
                .filter(|&j| j != i)
                .map(|j| euclid(rows.row(i), rows.row(j)))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

fn hdbscan_recovery() -> Outcome {
    let (mut rows, truth) = blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 100, 0.3, 7);
    let mut r = rng(8);
    let mut noise = Array2::zeros((20, 2));
    for i in 0..20 {
        noise[[i, 0]] = r.random_range(-4.0..14.0);
        noise[[i, 1]] = r.random_range(-6.0..6.0);
    }
    rows = ndarray::concatenate![ndarray::Axis(0), rows, noise];
    let m = reduced(rows.clone());
    let params = HdbscanParams::default();
    let fit = hdbscan_fit(&m, &params).map_err(|e| e.to_string())?;
    ensure!(fit.assignment.k == 2, "found {} clusters", fit.assignment.k);

    // Purity over blob points: each blob must map onto one cluster.
    let labels = &fit.assignment.labels;
    let mut hits = 0;
    for blob in 0..2 {
        let members: Vec<i64> = (0..200)
            .filter(|&i| truth[i] == blob)
            .map(|i| labels[i])
            .collect();
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &l in &members {
            if l != NOISE {
                *counts.entry(l).or_default() += 1;
            }
        }
        hits += counts.values().max().copied().unwrap_or(0);
    }
    let purity = hits as f64 / 200.0;
    ensure!(purity >= 0.95, "purity {purity}");

    let core = oracle_core(&rows, params.min_samples);
    let got_core = core_distances(&rows, params.min_samples).map_err(|e| e.to_string())?;
    for (a, b) in core.iter().zip(&got_core) {
        ensure!((a - b).abs() <= 1e-12, "core distance {b} vs {a}");
    }
    let n = rows.nrows();
    for a in 0..n {
        for b in 0..n {
            let mr = mutual_reachability(a, b, &got_core, &rows);
            let d = euclid(rows.row(a), rows.row(b));
            ensure!(
                mr == mutual_reachability(b, a, &got_core, &rows),
                "asymmetric at ({a},{b})"
            );
            if a != b {
                ensure!(
                    mr >= d && mr >= core[a] && mr >= core[b],
                    "mr below a bound at ({a},{b})"
                );
                ensure!(
                    (mr - d.max(core[a]).max(core[b])).abs() <= 1e-12,
                    "mr not the max at ({a},{b})"
                );
            }
        }
    }

    // MST on a 50-point subsample against exhaustive Kruskal.
    let mut pick: Vec<usize> = (0..n).collect();
    for i in 0..50 {
        let j = r.random_range(i..n);
        pick.swap(i, j);
    }
    let sub = rows.select(ndarray::Axis(0), &pick[..50]);
    let sub_core = core_distances(&sub, params.min_samples).map_err(|e| e.to_string())?;
    let mst = minimum_spanning_tree(&sub, &sub_core);
    ensure!(mst.len() == 49, "MST has {} edges", mst.len());
    let mst_weight: f64 = mst.iter().map(|e| e.weight).sum();
    let mut edges = Vec::new();
    for a in 0..50 {
        for b in a + 1..50 {
            let d = euclid(sub.row(a), sub.row(b))
                .max(sub_core[a])
                .max(sub_core[b]);
            edges.push((d, a, b));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut uf = UnionFind((0..50).collect());
    let kruskal: f64 = edges
        .iter()
        .filter(|(_, a, b)| uf.union(*a, *b))
        .map(|e| e.0)
        .sum();
    ensure!(
        (mst_weight - kruskal).abs() <= 1e-9,
        "MST {mst_weight} vs Kruskal {kruskal}"
    );
    Ok(format!(
        "2 clusters, purity {purity:.3}, {} noise, MST {mst_weight:.6} = Kruskal",
        fit.assignment.noise_count()
    ))
}

// ---------------------------------------------------------------- KMeans

fn kmeans_criteria() -> Outcome {
    let mut steps = 0;
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        let n = r.random_range(60..200);
        let dim = r.random_range(2..6);
        let k = r.random_range(2..8);
        let rows = Array2::from_shape_fn((n, dim), |_| r.random_range(-5.0..5.0));
        let fit = kmeans_fit(&reduced(rows), k, 300, seed).map_err(|e| e.to_string())?;
        for w in fit.sse_trace.windows(2) {
            ensure!(
                w[1] <= w[0],
                "dataset {seed}: SSE rose {} -> {}",
                w[0],
                w[1]
            );
        }
        steps += fit.sse_trace.len();
    }
    let centres = [
        vec![0.0, 0.0, 0.0],
        vec![8.0, 0.0, 0.0],
        vec![0.0, 8.0, 0.0],
    ];
    let (rows, truth) = blobs(&centres, 100, 1.0, 11);
    let fit = kmeans_fit(&reduced(rows), 3, 300, 42).map_err(|e| e.to_string())?;
    let score = ari(&fit.assignment.labels, &truth);
    ensure!(score >= 0.99, "ARI {score}");
    Ok(format!(
        "{steps} SSE steps non-increasing over 10 datasets, ARI {score:.4}"
    ))
}

// ---------------------------------------------------------------- PCA

fn pca_vs_svd() -> Outcome {
    let mut r = rng(5);
    let rows = Array2::from_shape_fn((40, 6), |(_, j)| r.random_range(-1.0..1.0) * (j + 1) as f64);
    let emb = EmbeddingMatrix::new(ids(40), rows.clone()).map_err(|e| e.to_string())?;
    let fit = pca_fit(&emb, 3).map_err(|e| e.to_string())?;

    let mean = rows.mean_axis(ndarray::Axis(0)).unwrap();
    let centred = DMatrix::from_fn(40, 6, |i, j| rows[[i, j]] - mean[j]);
    let svd = centred.clone().svd(true, true);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.as_ref().unwrap();
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut worst = 0.0f64;
    for (c, &o) in order.iter().take(3).enumerate() {
        let s = svd.singular_values[o];
        let want: Vec<f64> = (0..40).map(|i| u[(i, o)] * s).collect();
        let got: Vec<f64> = (0..40).map(|i| fit.projection.rows[[i, c]]).collect();
        let sign = if want.iter().zip(&got).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        for (a, b) in want.iter().zip(&got) {
            worst = worst.max((a - sign * b).abs());
        }
        let ratio = s * s / total;
        ensure!(
            (fit.explained_variance_ratio[c] - ratio).abs() <= 1e-10,
            "explained variance {} vs {ratio}",
            fit.explained_variance_ratio[c]
        );
    }
    ensure!(worst <= 1e-8, "projection differs by {worst}");
    let comps = &fit.components;
    for a in 0..3 {
        for b in 0..3 {
            let dot = comps.row(a).dot(&comps.row(b));
            let want = if a == b { 1.0 } else { 0.0 };
            ensure!((dot - want).abs() <= 1e-10, "components {a},{b} dot {dot}");
        }
    }
    ensure!(
        fit.explained_variance_ratio
            .windows(2)
            .all(|w| w[0] >= w[1]),
        "explained variance increases"
    );
    Ok(format!(
        "max projection error {worst:.2e}, orthonormal, variance non-increasing"
    ))
}

// ---------------------------------------------------------------- UMAP

fn umap_criteria() -> Outcome {
    let mut r = rng(21);
    let centres: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..20).map(|_| r.random_range(-10.0..10.0)).collect())
        .collect();
    let (rows, truth) = blobs(&centres, 100, 1.0, 22);
    let emb = EmbeddingMatrix::new(ids(500), rows).map_err(|e| e.to_string())?;
    let params = UmapParams {
        n_components: 5,
        seed: 42,
        ..UmapParams::default()
    };
    let start = Instant::now();
    let first = umap(&emb, &params).map_err(|e| e.to_string())?;
    let fit_time = start.elapsed();
    let second = umap(&emb, &params).map_err(|e| e.to_string())?;
    ensure!(first.dim() == 5, "dim {}", first.dim());
    ensure!(
        first.rows.iter().all(|v| v.is_finite()),
        "non-finite coordinate"
    );
    let identical = first
        .rows
        .iter()
        .zip(second.rows.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(identical, "two runs with seed 42 differ");
    let other = umap(
        &emb,
        &UmapParams {
            seed: 43,
            ..params.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(other.rows != first.rows, "seed has no effect");

    let y = &first.rows;
    let mut correct = 0;
    for i in 0..500 {
        let nn = (0..500)
            .filter(|&j| j != i)
            .min_by(|&a, &b| euclid(y.row(i), y.row(a)).total_cmp(&euclid(y.row(i), y.row(b))))
            .unwrap();
        if truth[nn] == truth[i] {
            correct += 1;
        }
    }
    let acc = correct as f64 / 500.0;
    ensure!(acc >= 0.98, "1-NN accuracy {acc}");
    Ok(format!(
        "bit-identical reruns, 1-NN accuracy {acc:.3}, n=500 fit {:.2}s",
        fit_time.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- LDA

/// Marginal likelihood for K = 2, alpha = 1/2: enumerate topic assignments
/// and integrate over theta with theta_0 = sin^2(u). B(1/2, 1/2) = pi.
fn quadrature_likelihood(beta: &Array2<f64>, words: &[usize]) -> f64 {
    let n = words.len();
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, m: usize| {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let mut total = 0.0;
    for mask in 0..(1u32 << n) {
        let ones = mask.count_ones() as i32;
        let zeros = n as i32 - ones;
        let word_prob: f64 = (0..n)
            .map(|i| beta[[((mask >> i) & 1) as usize, words[i]]])
            .product();
        // With alpha = 1/2 the Jacobian 2 sin^(2a-1) cos^(2a-1) is just 2.
        let integrand = |u: f64| {
            let t0 = u.sin().powi(2);
            t0.powi(zeros) * (1.0 - t0).powi(ones) * 2.0
        };
        total += word_prob * simpson(&integrand, 0.0, std::f64::consts::FRAC_PI_2, 2000)
            / std::f64::consts::PI;
    }
    total
}

fn lda_criteria() -> Outcome {
    let (k, v, m) = (3, 50, 200);
    let mut r = rng(31);
    let beta_true: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut r, 0.1, v)).collect();
    let docs: Vec<Vec<(usize, u32)>> = (0..m)
        .map(|_| {
            let theta = dirichlet(&mut r, 1.0 / k as f64, k);
            let len = r.random_range(60..=100);
            let mut bag: BTreeMap<usize, u32> = BTreeMap::new();
            for _ in 0..len {
                let z = categorical(&mut r, &theta);
                *bag.entry(categorical(&mut r, &beta_true[z])).or_default() += 1;
            }
            bag.into_iter().collect()
        })
        .collect();
    let (beta, _gamma, trace) = fit_bags(&docs, v, k, 200, 42).map_err(|e| e.to_string())?;
    ensure!(trace.len() == 200, "trace has {} entries", trace.len());
    for (i, w) in trace.windows(2).enumerate() {
        ensure!(
            w[1] >= w[0] - 1e-6,
            "ELBO fell at iteration {}: {} -> {}",
            i + 1,
            w[0],
            w[1]
        );
    }
    let fitted: Vec<Vec<f64>> = beta.outer_iter().map(|row| row.to_vec()).collect();
    let (best_mean, best_min) = permutations(k)
        .iter()
        .map(|p| {
            let cos: Vec<f64> = (0..k)
                .map(|t| vec_cosine(&beta_true[t], &fitted[p[t]]))
                .collect();
            (
                cos.iter().sum::<f64>() / k as f64,
                cos.iter().copied().fold(f64::INFINITY, f64::min),
            )
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    ensure!(best_min >= 0.8, "worst matched topic cosine {best_min}");

    // Tiny instance for the exact document likelihood.
    let tiny = vec![
        vec![(0, 3), (1, 2)],
        vec![(2, 2), (3, 3)],
        vec![(0, 1), (3, 1), (4, 2)],
        vec![(1, 1), (4, 3)],
    ];
    let (tb, tg, tt) = fit_bags(&tiny, 5, 2, 50, 11).map_err(|e| e.to_string())?;
    let model = LdaModel {
        k: 2,
        alpha: 0.5,
        beta: tb,
        gamma: tg,
        elbo_trace: tt,
        vocabulary: (0..5).map(|i| format!("w{i}")).collect(),
    };
    let mut worst = 0.0f64;
    for words in [vec![0, 1, 4], vec![2, 2, 3], vec![0, 3, 1, 4], vec![4]] {
        let exact = model
            .document_likelihood(&words)
            .map_err(|e| e.to_string())?;
        let oracle = quadrature_likelihood(&model.beta, &words);
        worst = worst.max((exact - oracle).abs());
    }
    ensure!(
        worst <= 1e-4,
        "likelihood differs from quadrature by {worst}"
    );
    Ok(format!(
        "ELBO monotone over 200 iterations, recovery cosine mean {best_mean:.3} min {best_min:.3}, likelihood error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- compare

fn compare_criteria() -> Outcome {
    let mut r = rng(41);
    let a = Array2::from_shape_fn((12, 48), |_| r.random_range(-1.0..1.0));
    let b = Array2::from_shape_fn((9, 48), |_| r.random_range(-1.0..1.0));
    let (self_m, self_best, self_avg) = similarity(&a, &a).map_err(|e| e.to_string())?;
    ensure!(self_avg == 1.0, "self AvgSim {self_avg}");
    for (i, m) in self_best.iter().enumerate() {
        ensure!(m.topic == i && m.score == 1.0, "self best for {i}: {:?}", m);
    }
    ensure!(
        self_m.diag().iter().all(|&d| d == 1.0),
        "self diagonal not exactly 1"
    );

    // The fixture model compared with itself, as stored on disk.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let cfg = fixture_config();
    crosstopic_ok(["topics", "--config", cfg.to_str().unwrap(), "--out", out]);
    let model = dir.path().join("dialogue.topics.json");
    let model = model.to_str().unwrap();
    crosstopic_ok(["compare", "--out", out, "--model", model, "--model", model]);
    let report = read_json(&dir.path().join("dialogue_vs_dialogue.similarity.json"));
    ensure!(
        report["avg_sim"].as_f64() == Some(1.0),
        "fixture self AvgSim {}",
        report["avg_sim"]
    );

    let (ab, best, _) = similarity(&a, &b).map_err(|e| e.to_string())?;
    let (ba, _, _) = similarity(&b, &a).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..12 {
        for j in 0..9 {
            worst = worst.max((ab[[i, j]] - ba[[j, i]]).abs());
        }
    }
    ensure!(worst <= 1e-12, "transpose differs by {worst}");

    for trial in 0..100 {
        let mut scaled = b.clone();
        for mut row in scaled.outer_iter_mut() {
            row *= 10f64.powf(r.random_range(-3.0..3.0));
        }
        let (_, sbest, _) = similarity(&a, &scaled).map_err(|e| e.to_string())?;
        for (x, y) in best.iter().zip(&sbest) {
            ensure!(
                x.topic == y.topic,
                "trial {trial}: argmax moved {} -> {}",
                x.topic,
                y.topic
            );
        }
    }
    Ok(format!(
        "self AvgSim exactly 1, transpose error {worst:.1e}, argmax stable over 100 rescalings"
    ))
}

// ---------------------------------------------------------------- end to end

fn count_topics(path: &Path) -> usize {
    read_json(path)["topics"].as_array().unwrap().len()
}

/// topics + compare + LDA baseline with K equal to each corpus's topic count.
fn pipeline_run(out: &Path) {
    let o = out.to_str().unwrap();
    let cfg = fixture_config();
    let cfg = cfg.to_str().unwrap();
    crosstopic_ok(["ingest", "--config", cfg, "--out", o]);
    crosstopic_ok(["topics", "--config", cfg, "--out", o]);
    let a = format!("{o}/{}.topics.json", CORPORA[0]);
    let b = format!("{o}/{}.topics.json", CORPORA[1]);
    crosstopic_ok(["compare", "--out", o, "--model", &a, "--model", &b]);
    for name in CORPORA {
        let k = count_topics(&out.join(format!("{name}.topics.json"))).to_string();
        let corpus = corpus_path(name);
        crosstopic_ok([
            "lda",
            "--out",
            o,
            "--k",
            &k,
            "--corpus",
            corpus.to_str().unwrap(),
        ]);
    }
}

/// Mean TC-NPMI of a topic file recomputed from the ingested documents with
/// whole-document windows (every fixture verse is shorter than the window).
fn recompute_coherence(out: &Path, name: &str, words: &[Vec<String>], n: usize) -> f64 {
    let jsonl = std::fs::read_to_string(out.join(format!("{name}.jsonl"))).unwrap();
    let docs: Vec<BTreeSet<String>> = jsonl
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["text"]
                .as_str()
                .unwrap()
                .split_whitespace()
                .map(str::to_owned)
                .collect()
        })
        .collect();
    let max_len = jsonl
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["text"]
                .as_str()
                .unwrap()
                .split_whitespace()
                .count()
        })
        .max()
        .unwrap();
    assert!(max_len <= 110, "fixture verse of {max_len} tokens");
    let mut per_topic = Vec::new();
    for t in words {
        let present: Vec<&String> = t[..n]
            .iter()
            .filter(|w| docs.iter().any(|d| d.contains(*w)))
            .collect();
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..present.len() {
            for j in i + 1..present.len() {
                sum += oracle_npmi(&docs, present[i], present[j], 1e-12).3;
                pairs += 1;
            }
        }
        if pairs > 0 {
            per_topic.push(sum / pairs as f64);
        }
    }
    per_topic.iter().sum::<f64>() / per_topic.len() as f64
}

fn word_lists(v: &serde_json::Value, lda: bool) -> Vec<Vec<String>> {
    let topics = v["topics"].as_array().unwrap();
    topics
        .iter()
        .map(|t| {
            let list = if lda { t } else { &t["top_words"] };
            list.as_array()
                .unwrap()
                .iter()
                .map(|p| p[0].as_str().unwrap().to_owned())
                .collect()
        })
        .collect()
}

fn end_to_end() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline_run(first.path());
    pipeline_run(second.path());
    let (ta, tb) = (tree(first.path()), tree(second.path()));
    ensure!(ta.keys().eq(tb.keys()), "file sets differ");
    for (path, bytes) in &ta {
        ensure!(
            tb[path] == *bytes,
            "{} differs between runs",
            path.display()
        );
    }
    let schemas = validate_tree(first.path())?;

    let mut details = Vec::new();
    for name in CORPORA {
        let topics = read_json(&first.path().join(format!("{name}.topics.json")));
        let k = topics["topics"].as_array().unwrap().len();
        ensure!((10..=20).contains(&k), "{name}: {k} topics");
        let reported = read_json(&first.path().join(format!("{name}.coherence.json")))["coherence"]
            ["mean"]
            .as_f64()
            .unwrap();
        let ours = recompute_coherence(first.path(), name, &word_lists(&topics, false), 50);
        ensure!(
            (ours - reported).abs() <= 1e-9,
            "{name}: reported NPMI {reported}, oracle {ours}"
        );
        ensure!(reported > 0.4, "{name}: mean NPMI {reported}");
        let lda = read_json(&first.path().join(format!("{name}.lda.json")));
        let lda_reported = read_json(&first.path().join(format!("{name}.lda.coherence.json")))
            ["coherence"]["mean"]
            .as_f64()
            .unwrap();
        let lda_ours = recompute_coherence(first.path(), name, &word_lists(&lda, true), 50);
        ensure!(
            (lda_ours - lda_reported).abs() <= 1e-9,
            "{name}: LDA NPMI {lda_reported}, oracle {lda_ours}"
        );
        ensure!(
            reported > lda_reported,
            "{name}: NPMI {reported} not above LDA {lda_reported}"
        );
        details.push(format!(
            "{name}: {k} topics, NPMI {reported:.3} vs LDA {lda_reported:.3}"
        ));
    }
    Ok(format!(
        "{} identical files, {schemas} schema-valid; {}",
        ta.len(),
        details.join("; ")
    ))
}

// ---------------------------------------------------------------- centroids

/// Mean of member rows per label, computed directly.
fn oracle_centroids(docs: &EmbeddingMatrix, model: &TopicModel) -> Array2<f64> {
    let k = model.n_topics();
    let index: HashMap<&str, usize> = docs
        .item_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut sums = Array2::<f64>::zeros((k, docs.dim()));
    let mut counts = vec![0usize; k];
    for (id, &l) in model
        .assignment
        .item_ids
        .iter()
        .zip(&model.assignment.labels)
    {
        if l == NOISE {
            continue;
        }
        let row = docs.row(index[id.as_str()]);
        let mut s = sums.row_mut(l as usize);
        s += &row;
        counts[l as usize] += 1;
    }
    for (t, &c) in counts.iter().enumerate() {
        let mut s = sums.row_mut(t);
        s /= c as f64;
    }
    sums
}

fn deviation(docs: &EmbeddingMatrix, model: &TopicModel) -> f64 {
    let want = oracle_centroids(docs, model);
    want.iter()
        .zip(model.topic_vectors.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn centroid_invariant() -> Outcome {
    let docs = read_embeddings(docs_emb_path("dialogue")).map_err(|e| e.to_string())?;
    let words = read_embeddings(words_emb_path()).map_err(|e| e.to_string())?;
    let reducer = Reducer::Umap(UmapParams::default());
    let red = reducer.apply(&docs).map_err(|e| e.to_string())?;
    let assignment = hdbscan(&red, &HdbscanParams::default()).map_err(|e| e.to_string())?;
    let prov = Provenance {
        embedder: "lsa-tfidf-48".into(),
        reducer: "umap".into(),
        clusterer: "hdbscan".into(),
        params: serde_json::Value::Null,
        seed: 42,
        inputs: BTreeMap::new(),
    };
    let model =
        build_topic_model(&docs, &words, assignment, 50, prov).map_err(|e| e.to_string())?;
    ensure!(
        model.n_topics() == 14,
        "fixture yields {} topics, expected 14",
        model.n_topics()
    );
    let mut stages = vec![("clustered", deviation(&docs, &model))];

    let json = topic_model_to_json(&model).map_err(|e| e.to_string())?;
    let reloaded = topic_model_from_json(&json).map_err(|e| e.to_string())?;
    stages.push(("reloaded", deviation(&docs, &reloaded)));

    let mut step = reloaded.clone();
    for target in (10..14).rev() {
        step = reduce_topics(&step, &docs, &words, target).map_err(|e| e.to_string())?;
        stages.push(("merged", deviation(&docs, &step)));
    }
    let direct = reduce_topics(&model, &docs, &words, 10).map_err(|e| e.to_string())?;
    stages.push(("merged 14->10", deviation(&docs, &direct)));
    ensure!(
        direct.n_topics() == 10,
        "direct reduction left {} topics",
        direct.n_topics()
    );

    // The CLI's merged model on disk.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixture_config();
    crosstopic_ok([
        "topics",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--reduce-to",
        "10",
    ]);
    let src = std::fs::read_to_string(dir.path().join("dialogue.topics.json"))
        .map_err(|e| e.to_string())?;
    let cli_model = topic_model_from_json(&src).map_err(|e| e.to_string())?;
    ensure!(
        cli_model.n_topics() == 10,
        "CLI model has {} topics",
        cli_model.n_topics()
    );
    stages.push(("cli 14->10", deviation(&docs, &cli_model)));

    let worst = stages.iter().map(|s| s.1).fold(0.0f64, f64::max);
    for (stage, d) in &stages {
        ensure!(*d <= 1e-9, "{stage}: centroid deviation {d}");
    }
    Ok(format!(
        "{} stages, max deviation {worst:.1e}",
        stages.len()
    ))
}
