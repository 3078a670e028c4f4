//! Document clustering on reduced coordinates.

mod hdbscan;
mod kmeans;

pub use hdbscan::{
    core_distances, hdbscan, hdbscan_fit, minimum_spanning_tree, mutual_reachability,
    CondensedEdge, HdbscanFit, HdbscanParams, MstEdge,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit, DEFAULT_KMEANS_ITERS};

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for documents that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    Hdbscan,
}

impl std::str::FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMethod::Kmeans),
            "hdbscan" => Ok(ClusterMethod::Hdbscan),
            other => Err(Error::param(format!("unknown clusterer {other:?}"))),
        }
    }
}

impl std::fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMethod::Kmeans => "kmeans",
            ClusterMethod::Hdbscan => "hdbscan",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ClusterParams {
    Kmeans { k: usize, iters: usize, seed: u64 },
    Hdbscan(HdbscanParams),
}

/// Per-item cluster labels; `-1` marks noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub item_ids: Vec<String>,
    pub labels: Vec<i64>,
    pub k: usize,
    pub method: ClusterMethod,
    pub params: ClusterParams,
}

impl ClusterAssignment {
    /// Checks that labels lie in `{-1, 0..k-1}` and each cluster is non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.item_ids.len() {
            return Err(Error::input("labels and item ids differ in length"));
        }
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            match l {
                NOISE => {}
                l if l >= 0 && (l as usize) < self.k => seen[l as usize] = true,
                l => return Err(Error::input(format!("label {l} outside 0..{}", self.k))),
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::input(format!("cluster {c} has no members")));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "id,label")?;
        for (id, l) in self.item_ids.iter().zip(&self.labels) {
            writeln!(out, "{},{l}", crate::report::csv_field(id))?;
        }
        Ok(())
    }
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len() as u64;
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
