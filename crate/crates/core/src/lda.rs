//! Latent Dirichlet allocation fitted by mean-field variational EM.
//!
//! Each outer iteration runs a warm-started E-step per document (alternating
//! updates of the word-topic responsibilities and the Dirichlet posterior),
//! an M-step that re-estimates topic-word probabilities from expected counts,
//! and records the evidence lower bound under the new topics.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const DEFAULT_LDA_ITERS: usize = 200;
const BETA_FLOOR: f64 = 1e-9;
const E_STEP_TOL: f64 = 1e-3;
const E_STEP_MAX_ITERS: usize = 100;
/// Exhaustive likelihood enumerates K^N assignments; keep N small.
const MAX_ENUMERATED_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub k: usize,
    /// Symmetric Dirichlet prior on per-document topic proportions.
    pub alpha: f64,
    /// `K × V` topic-word probabilities.
    pub beta: Array2<f64>,
    /// `M × K` variational Dirichlet parameters per document.
    pub gamma: Array2<f64>,
    pub elbo_trace: Vec<f64>,
    pub vocabulary: Vec<String>,
}

type Bag = [(usize, u32)];

struct DocState {
    gamma: Array1<f64>,
    /// One row per distinct word in the document.
    phi: Array2<f64>,
}

fn e_step(bag: &Bag, beta: &Array2<f64>, alpha: f64, mut gamma: Array1<f64>) -> DocState {
    let k = beta.nrows();
    let mut phi = Array2::zeros((bag.len(), k));
    let mut log_row = vec![0.0; k];
    for _ in 0..E_STEP_MAX_ITERS {
        let e_log_theta: Vec<f64> = gamma.iter().map(|&g| digamma(g)).collect();
        for (n, &(w, _)) in bag.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for t in 0..k {
                log_row[t] = beta[[t, w]].ln() + e_log_theta[t];
                max = max.max(log_row[t]);
            }
            let mut norm = 0.0;
            for t in 0..k {
                log_row[t] = (log_row[t] - max).exp();
                norm += log_row[t];
            }
            for t in 0..k {
                phi[[n, t]] = log_row[t] / norm;
            }
        }
        let mut next = Array1::from_elem(k, alpha);
        for (n, &(_, c)) in bag.iter().enumerate() {
            next.scaled_add(c as f64, &phi.row(n));
        }
        let delta = (&next - &gamma).mapv(f64::abs).mean().unwrap_or(0.0);
        gamma = next;
        if delta < E_STEP_TOL {
            break;
        }
    }
    DocState { gamma, phi }
}

fn doc_elbo(bag: &Bag, state: &DocState, beta: &Array2<f64>, alpha: f64) -> f64 {
    let k = beta.nrows();
    let gamma_sum: f64 = state.gamma.sum();
    let dg_sum = digamma(gamma_sum);
    let e_log_theta: Vec<f64> = state.gamma.iter().map(|&g| digamma(g) - dg_sum).collect();
    let mut l = ln_gamma(k as f64 * alpha) - k as f64 * ln_gamma(alpha);
    l += (alpha - 1.0) * e_log_theta.iter().sum::<f64>();
    for (n, &(w, c)) in bag.iter().enumerate() {
        let mut word = 0.0;
        for t in 0..k {
            let p = state.phi[[n, t]];
            if p > 0.0 {
                word += p * (e_log_theta[t] + beta[[t, w]].ln() - p.ln());
            }
        }
        l += c as f64 * word;
    }
    l -= ln_gamma(gamma_sum);
    for t in 0..k {
        l += ln_gamma(state.gamma[t]) - (state.gamma[t] - 1.0) * e_log_theta[t];
    }
    l
}

/// Fits LDA to bags of `(word id, count)` over a vocabulary of size `v`.
/// Returns `(beta, gamma, elbo_trace)`.
pub fn fit_bags(
    bags: &[Vec<(usize, u32)>],
    v: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>, Vec<f64>)> {
    if v == 0 {
        return Err(Error::input("LDA vocabulary is empty"));
    }
    if k == 0 {
        return Err(Error::param("LDA needs at least one topic"));
    }
    if iters == 0 {
        return Err(Error::param("LDA needs at least one iteration"));
    }
    if let Some(&(w, _)) = bags.iter().flatten().find(|(w, _)| *w >= v) {
        return Err(Error::input(format!("word id {w} outside vocabulary of {v}")));
    }
    let alpha = 1.0 / k as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = Array2::from_shape_fn((k, v), |_| 1.0 / v as f64 + rng.random::<f64>());
    for mut row in beta.outer_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut gammas: Vec<Array1<f64>> = bags
        .iter()
        .map(|bag| {
            let len: u32 = bag.iter().map(|b| b.1).sum();
            Array1::from_elem(k, alpha + len as f64 / k as f64)
        })
        .collect();
    let mut trace = Vec::with_capacity(iters);

    for _ in 0..iters {
        let states: Vec<DocState> = bags
            .par_iter()
            .zip(gammas.par_iter())
            .map(|(bag, g)| e_step(bag, &beta, alpha, g.clone()))
            .collect();

        // Fixed document order keeps the reduction deterministic.
        let mut counts = Array2::<f64>::zeros((k, v));
        for (bag, state) in bags.iter().zip(&states) {
            for (n, &(w, c)) in bag.iter().enumerate() {
                for t in 0..k {
                    counts[[t, w]] += c as f64 * state.phi[[n, t]];
                }
            }
        }
        for (mut row, counts) in beta.outer_iter_mut().zip(counts.outer_iter()) {
            let total = counts.sum();
            if total > 0.0 {
                row.assign(&counts.mapv(|c| (c / total).max(BETA_FLOOR)));
            } else {
                row.fill(1.0 / v as f64);
            }
            let s = row.sum();
            row /= s;
        }

        let parts: Vec<f64> = bags
            .par_iter()
            .zip(states.par_iter())
            .map(|(bag, state)| doc_elbo(bag, state, &beta, alpha))
            .collect();
        trace.push(parts.iter().sum());
        gammas = states.into_iter().map(|s| s.gamma).collect();
    }

    let mut gamma = Array2::zeros((bags.len(), k));
    for (d, g) in gammas.iter().enumerate() {
        gamma.row_mut(d).assign(g);
    }
    Ok((beta, gamma, trace))
}

pub fn lda_fit(corpus: &Corpus, k: usize, iters: usize, seed: u64) -> Result<LdaModel> {
    let bags = corpus.bags_of_words();
    let (beta, gamma, elbo_trace) = fit_bags(&bags, corpus.vocabulary.len(), k, iters, seed)?;
    Ok(LdaModel {
        k,
        alpha: 1.0 / k as f64,
        beta,
        gamma,
        elbo_trace,
        vocabulary: corpus.vocabulary.clone(),
    })
}

impl LdaModel {
    /// Top `n` words per topic by probability; ties keep vocabulary order.
    pub fn topics(&self, n: usize) -> Result<Vec<Vec<(String, f64)>>> {
        let v = self.beta.ncols();
        if n == 0 || n > v {
            return Err(Error::param(format!("requested {n} words from {v}")));
        }
        Ok(self
            .beta
            .outer_iter()
            .map(|row| {
                let mut order: Vec<usize> = (0..v).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                order
                    .into_iter()
                    .take(n)
                    .map(|w| (self.vocabulary[w].clone(), row[w]))
                    .collect()
            })
            .collect())
    }

    /// Exact marginal likelihood of a word sequence: every topic assignment
    /// enumerated, with the topic proportions integrated analytically through
    /// Dirichlet moments.
    pub fn document_likelihood(&self, words: &[usize]) -> Result<f64> {
        if words.len() > MAX_ENUMERATED_WORDS {
            return Err(Error::param(format!(
                "exact likelihood limited to {MAX_ENUMERATED_WORDS} words"
            )));
        }
        if let Some(&w) = words.iter().find(|&&w| w >= self.beta.ncols()) {
            return Err(Error::input(format!("word id {w} outside vocabulary")));
        }
        let (k, n) = (self.k, words.len());
        let alpha = self.alpha;
        let log_norm = ln_gamma(k as f64 * alpha) - ln_gamma(k as f64 * alpha + n as f64);
        let mut total = 0.0;
        let mut z = vec![0usize; n];
        loop {
            let mut counts = vec![0usize; k];
            let mut word_prob = 1.0;
            for (&t, &w) in z.iter().zip(words) {
                counts[t] += 1;
                word_prob *= self.beta[[t, w]];
            }
            let log_moment: f64 = counts
                .iter()
                .map(|&c| ln_gamma(alpha + c as f64) - ln_gamma(alpha))
                .sum();
            total += word_prob * (log_norm + log_moment).exp();
            // Odometer increment over K^N assignments.
            let mut pos = 0;
            loop {
                if pos == n {
                    return Ok(total);
                }
                z[pos] += 1;
                if z[pos] < k {
                    break;
                }
                z[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// On-disk LDA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModelJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub topics: Vec<Vec<(String, f64)>>,
    pub elbo_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl LdaModelJson {
    pub fn from_model(m: &LdaModel, top_n: usize, provenance: Option<serde_json::Value>) -> Result<Self> {
        Ok(LdaModelJson {
            k: m.k,
            alpha: m.alpha,
            topics: m.topics(top_n.min(m.beta.ncols()))?,
            elbo_trace: m.elbo_trace.clone(),
            provenance,
        })
    }
}
