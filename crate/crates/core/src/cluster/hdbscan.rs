use std::collections::VecDeque;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterMethod, ClusterParams, NOISE};
use crate::error::{Error, Result};
use crate::reduce::ReducedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 10,
            min_samples: 5,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::param("min_cluster_size must be at least 2"));
        }
        if self.min_samples < 1 {
            return Err(Error::param("min_samples must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    /// Raw Euclidean distance, used only to break weight ties.
    pub distance: f64,
}

/// One row of the condensed tree: `child` leaves `parent` at `lambda`.
/// Children below `n` are points, others are clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone)]
pub struct HdbscanFit {
    pub assignment: ClusterAssignment,
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub condensed: Vec<CondensedEdge>,
    /// Stability per condensed cluster id (index `id - n`).
    pub stability: Vec<f64>,
    /// Condensed cluster id of each output label.
    pub selected: Vec<usize>,
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance from each point to its `k`-th nearest other point.
pub fn core_distances(rows: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let n = rows.nrows();
    if k == 0 || k >= n {
        return Err(Error::param(format!("core distance k={k} must lie in 1..{n}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(rows.row(i), rows.row(j)))
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect())
}

/// `max(core(a), core(b), d(a, b))`.
pub fn mutual_reachability(a: usize, b: usize, core: &[f64], rows: &Array2<f64>) -> f64 {
    core[a]
        .max(core[b])
        .max(euclidean(rows.row(a), rows.row(b)))
}

/// Edge order used everywhere: mutual-reachability weight, then raw
/// distance, then `(min index, max index)`. The distance tie-break keeps the
/// tree independent of input order whenever raw distances are distinct.
type EdgeKey = (f64, f64, usize, usize);

fn edge_key(w: f64, d: f64, a: usize, b: usize) -> EdgeKey {
    (w, d, a.min(b), a.max(b))
}

fn key_cmp(x: &EdgeKey, y: &EdgeKey) -> std::cmp::Ordering {
    x.0.total_cmp(&y.0)
        .then(x.1.total_cmp(&y.1))
        .then(x.2.cmp(&y.2))
        .then(x.3.cmp(&y.3))
}

/// Prim's algorithm over the complete mutual-reachability graph, O(n²).
/// Edges are returned in insertion order.
pub fn minimum_spanning_tree(rows: &Array2<f64>, core: &[f64]) -> Vec<MstEdge> {
    let n = rows.nrows();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best: Vec<(EdgeKey, usize)> =
        vec![((f64::INFINITY, f64::INFINITY, usize::MAX, usize::MAX), usize::MAX); n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = euclidean(rows.row(current), rows.row(v));
            let key = edge_key(core[current].max(core[v]).max(d), d, current, v);
            if key_cmp(&key, &best[v].0).is_lt() {
                best[v] = (key, current);
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&x, &y| key_cmp(&best[x].0, &best[y].0))
            .expect("vertices remain");
        in_tree[next] = true;
        edges.push(MstEdge {
            a: best[next].1,
            b: next,
            weight: best[next].0 .0,
            distance: best[next].0 .1,
        });
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merge `(left, right, distance, size)`; node `n + i` is merge `i`.
struct Dendrogram {
    n: usize,
    merges: Vec<(usize, usize, f64, usize)>,
}

impl Dendrogram {
    fn from_mst(n: usize, mst: &[MstEdge]) -> Self {
        let mut sorted = mst.to_vec();
        sorted.sort_by(|x, y| {
            key_cmp(
                &edge_key(x.weight, x.distance, x.a, x.b),
                &edge_key(y.weight, y.distance, y.a, y.b),
            )
        });
        let mut uf = UnionFind::new(2 * n - 1);
        let mut size = vec![1usize; 2 * n - 1];
        let mut merges = Vec::with_capacity(n - 1);
        for (i, e) in sorted.iter().enumerate() {
            let (ra, rb) = (uf.find(e.a), uf.find(e.b));
            let node = n + i;
            size[node] = size[ra] + size[rb];
            uf.parent[ra] = node;
            uf.parent[rb] = node;
            merges.push((ra, rb, e.weight, size[node]));
        }
        Dendrogram { n, merges }
    }

    fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].3
        }
    }

    fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                let (l, r, _, _) = self.merges[x - self.n];
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::MAX
    }
}

/// Walks the dendrogram top-down; components smaller than `min_size` shed
/// their points into the parent cluster. Returns edges and the cluster count.
fn condense(dendro: &Dendrogram, min_size: usize) -> (Vec<CondensedEdge>, usize) {
    let n = dendro.n;
    let root = 2 * n - 2;
    let mut relabel = vec![usize::MAX; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let (left, right, dist, _) = dendro.merges[node - n];
        let lambda = lambda_of(dist);
        let parent = relabel[node];
        let (ls, rs) = (dendro.size(left), dendro.size(right));
        let shed = |child: usize, edges: &mut Vec<CondensedEdge>| {
            for p in dendro.leaves(child) {
                edges.push(CondensedEdge {
                    parent,
                    child: p,
                    lambda,
                    child_size: 1,
                });
            }
        };
        match (ls >= min_size, rs >= min_size) {
            (true, true) => {
                for (child, size) in [(left, ls), (right, rs)] {
                    relabel[child] = next_label;
                    edges.push(CondensedEdge {
                        parent,
                        child: next_label,
                        lambda,
                        child_size: size,
                    });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                shed(left, &mut edges);
                shed(right, &mut edges);
            }
            (true, false) => {
                relabel[left] = parent;
                shed(right, &mut edges);
                queue.push_back(left);
            }
            (false, true) => {
                relabel[right] = parent;
                shed(left, &mut edges);
                queue.push_back(right);
            }
        }
    }
    (edges, next_label - n)
}

/// `sum over children (lambda_leave - lambda_birth) * child_size` per cluster.
fn stabilities(edges: &[CondensedEdge], n: usize, n_clusters: usize) -> Vec<f64> {
    let mut birth = vec![0.0; n_clusters];
    for e in edges.iter().filter(|e| e.child >= n) {
        birth[e.child - n] = e.lambda;
    }
    let mut stability = vec![0.0; n_clusters];
    for e in edges {
        let c = e.parent - n;
        stability[c] += (e.lambda - birth[c]) * e.child_size as f64;
    }
    stability
}

/// Excess-of-mass selection. Leaves start selected; a parent replaces its
/// selected descendants only when its own stability is strictly larger. The
/// root is selected only when the tree never splits.
fn select_clusters(
    edges: &[CondensedEdge],
    n: usize,
    n_clusters: usize,
    stability: &[f64],
) -> Vec<usize> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in edges.iter().filter(|e| e.child >= n) {
        children[e.parent - n].push(e.child - n);
    }
    if children[0].is_empty() {
        return vec![n];
    }
    let mut selected = vec![false; n_clusters];
    let mut subtree = stability.to_vec();
    // Children always carry larger ids than their parent.
    for c in (1..n_clusters).rev() {
        if children[c].is_empty() {
            selected[c] = true;
            continue;
        }
        let below: f64 = children[c].iter().map(|&ch| subtree[ch]).sum();
        if stability[c] > below {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend_from_slice(&children[d]);
            }
        } else {
            subtree[c] = below;
        }
    }
    (1..n_clusters)
        .filter(|&c| selected[c])
        .map(|c| c + n)
        .collect()
}

pub fn hdbscan_fit(m: &ReducedMatrix, p: &HdbscanParams) -> Result<HdbscanFit> {
    p.validate()?;
    let rows = &m.rows;
    let n = rows.nrows();
    if n <= p.min_cluster_size {
        return Err(Error::param(format!(
            "HDBSCAN needs more rows ({n}) than min_cluster_size ({})",
            p.min_cluster_size
        )));
    }
    if p.min_samples >= n {
        return Err(Error::param(format!(
            "min_samples {} must be below the row count {n}",
            p.min_samples
        )));
    }
    let core = core_distances(rows, p.min_samples)?;
    let mst = minimum_spanning_tree(rows, &core);
    let dendro = Dendrogram::from_mst(n, &mst);
    let (condensed, n_clusters) = condense(&dendro, p.min_cluster_size);
    let stability = stabilities(&condensed, n, n_clusters);
    let selected = select_clusters(&condensed, n, n_clusters, &stability);

    let mut parent_of = vec![usize::MAX; n + n_clusters];
    for e in &condensed {
        parent_of[e.child] = e.parent;
    }
    let mut label_of_cluster = vec![NOISE; n_clusters];
    for (label, &c) in selected.iter().enumerate() {
        label_of_cluster[c - n] = label as i64;
    }
    let labels: Vec<i64> = (0..n)
        .map(|point| {
            let mut c = parent_of[point];
            while c != usize::MAX {
                if label_of_cluster[c - n] != NOISE {
                    return label_of_cluster[c - n];
                }
                c = parent_of[c];
            }
            NOISE
        })
        .collect();

    let assignment = ClusterAssignment {
        item_ids: m.item_ids.clone(),
        labels,
        k: selected.len(),
        method: ClusterMethod::Hdbscan,
        params: ClusterParams::Hdbscan(*p),
    };
    Ok(HdbscanFit {
        assignment,
        core_distances: core,
        mst,
        condensed,
        stability,
        selected,
    })
}

pub fn hdbscan(m: &ReducedMatrix, p: &HdbscanParams) -> Result<ClusterAssignment> {
    hdbscan_fit(m, p).map(|f| f.assignment)
}
