//! TC-NPMI topic coherence over Boolean sliding windows.
//!
//! Each document is cut into windows of `window_size` tokens (stride
//! `stride`); a document no longer than the window is one window. A word's
//! probability is the fraction of windows containing it at least once, and
//! likewise for pairs. Windows never span two documents.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 110;
pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const DEFAULT_TOP_N: usize = 50;

/// Word → sorted, disjoint half-open ranges of global window ids.
#[derive(Debug, Clone)]
pub struct WindowIndex {
    window_size: usize,
    stride: usize,
    virtual_docs: u64,
    postings: HashMap<String, Vec<(u64, u64)>>,
}

/// Window start offsets for a document of `len` tokens.
fn window_starts(len: usize, size: usize, stride: usize) -> Vec<usize> {
    if len <= size {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=len - size).step_by(stride).collect();
    if *starts.last().expect("nonempty") != len - size {
        starts.push(len - size);
    }
    starts
}

fn overlap(a: &[(u64, u64)], b: &[(u64, u64)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

impl WindowIndex {
    pub fn build(corpus: &Corpus, window_size: usize, stride: usize) -> Result<Self> {
        Self::from_token_docs(
            corpus.documents.iter().map(|d| d.tokens().collect::<Vec<_>>()),
            window_size,
            stride,
        )
    }

    /// Builds from pre-tokenised documents.
    pub fn from_token_docs<I, D, S>(docs: I, window_size: usize, stride: usize) -> Result<Self>
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        if window_size < 2 {
            return Err(Error::param("window size must be at least 2"));
        }
        if stride == 0 {
            return Err(Error::param("window stride must be positive"));
        }
        let mut postings: HashMap<String, Vec<(u64, u64)>> = HashMap::new();
        let mut offset = 0u64;
        for doc in docs {
            let toks = doc.as_ref();
            if toks.is_empty() {
                continue;
            }
            let starts = window_starts(toks.len(), window_size, stride);
            let mut local: HashMap<&str, Vec<(u64, u64)>> = HashMap::new();
            for (p, tok) in toks.iter().enumerate() {
                // Windows containing position p: start <= p < start + size.
                let first = starts.partition_point(|&s| s + window_size <= p) as u64;
                let last = starts.partition_point(|&s| s <= p) as u64;
                if first >= last {
                    continue;
                }
                let ranges = local.entry(tok.as_ref()).or_default();
                let range = (offset + first, offset + last);
                match ranges.last_mut() {
                    Some(prev) if prev.1 >= range.0 => prev.1 = prev.1.max(range.1),
                    _ => ranges.push(range),
                }
            }
            for (tok, ranges) in local {
                postings.entry(tok.to_owned()).or_default().extend(ranges);
            }
            offset += starts.len() as u64;
        }
        if offset == 0 {
            return Err(Error::input("reference corpus has no tokens"));
        }
        Ok(WindowIndex {
            window_size,
            stride,
            virtual_docs: offset,
            postings,
        })
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn virtual_doc_count(&self) -> u64 {
        self.virtual_docs
    }

    pub fn contains(&self, word: &str) -> bool {
        self.postings.contains_key(word)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.postings
            .get(word)
            .map_or(0, |r| r.iter().map(|(a, b)| b - a).sum())
    }

    pub fn joint_count(&self, a: &str, b: &str) -> u64 {
        match (self.postings.get(a), self.postings.get(b)) {
            (Some(x), Some(y)) => overlap(x, y),
            _ => 0,
        }
    }

    pub fn probability(&self, word: &str) -> f64 {
        self.count(word) as f64 / self.virtual_docs as f64
    }

    pub fn joint_probability(&self, a: &str, b: &str) -> f64 {
        self.joint_count(a, b) as f64 / self.virtual_docs as f64
    }
}

/// `log((P(a,b) + eps) / (P(a) P(b))) / -log(P(a,b) + eps)`.
///
/// A word absent from the index has zero probability; its marginal is then
/// floored at `eps` so the value stays finite.
pub fn npmi(a: &str, b: &str, idx: &WindowIndex, eps: f64) -> f64 {
    let pa = idx.probability(a).max(eps);
    let pb = idx.probability(b).max(eps);
    let joint = idx.joint_probability(a, b) + eps;
    (joint / (pa * pb)).ln() / -joint.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mean: f64,
    /// Mean pairwise NPMI per topic; `None` when fewer than two of the
    /// topic's words occur in the reference corpus.
    pub per_topic: Vec<Option<f64>>,
    pub n: usize,
    pub epsilon: f64,
    pub window: usize,
    /// Topic words absent from the reference corpus, summed over topics.
    pub skipped_words: usize,
}

/// TC-NPMI of ranked topic word lists against `idx`, using each topic's
/// first `n` words.
pub fn coherence<S: AsRef<str> + Sync>(
    topics: &[Vec<S>],
    n: usize,
    idx: &WindowIndex,
    eps: f64,
) -> Result<CoherenceReport> {
    if topics.is_empty() {
        return Err(Error::input("no topics to score"));
    }
    if n < 2 {
        return Err(Error::param("coherence needs at least 2 words per topic"));
    }
    if let Some(t) = topics.iter().position(|t| t.len() < n) {
        return Err(Error::param(format!(
            "topic {t} has {} words, fewer than n={n}",
            topics[t].len()
        )));
    }
    let scored: Vec<(Option<f64>, usize)> = topics
        .par_iter()
        .map(|words| {
            let present: Vec<&str> = words[..n]
                .iter()
                .map(AsRef::as_ref)
                .filter(|w| idx.contains(w))
                .collect();
            let skipped = n - present.len();
            if present.len() < 2 {
                return (None, skipped);
            }
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..present.len() {
                for j in i + 1..present.len() {
                    sum += npmi(present[i], present[j], idx, eps);
                    pairs += 1;
                }
            }
            (Some(sum / pairs as f64), skipped)
        })
        .collect();
    let values: Vec<f64> = scored.iter().filter_map(|s| s.0).collect();
    if values.is_empty() {
        return Err(Error::input(
            "no topic has two words present in the reference corpus",
        ));
    }
    Ok(CoherenceReport {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        per_topic: scored.iter().map(|s| s.0).collect(),
        n,
        epsilon: eps,
        window: idx.window_size,
        skipped_words: scored.iter().map(|s| s.1).sum(),
    })
}
