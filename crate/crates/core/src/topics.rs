//! Topic vectors, topic words, hierarchical topic reduction and the
//! coherence-driven HDBSCAN sweep.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    hdbscan, ClusterAssignment, ClusterMethod, ClusterParams, HdbscanParams, NOISE,
};
use crate::coherence::{coherence, WindowIndex, DEFAULT_EPSILON};
use crate::embed::{l2_norm, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::reduce::ReducedMatrix;

pub const DEFAULT_TOP_WORDS: usize = 50;

/// Where a topic model came from. Two models are comparable only when their
/// `embedder` ids match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub embedder: String,
    pub reducer: String,
    pub clusterer: String,
    pub params: serde_json::Value,
    pub seed: u64,
    /// Input name → SHA-256 hex digest.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

/// One step of hierarchical reduction, in the numbering current at that step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStep {
    pub removed: usize,
    pub into: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    /// `K × dim` centroids in the original embedding space.
    pub topic_vectors: Array2<f64>,
    pub assignment: ClusterAssignment,
    pub top_words: Vec<Vec<(String, f64)>>,
    pub provenance: Provenance,
    pub merges: Vec<MergeStep>,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.topic_vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.topic_vectors.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignment.sizes()
    }

    pub fn word_lists(&self) -> Vec<Vec<String>> {
        self.top_words
            .iter()
            .map(|t| t.iter().map(|(w, _)| w.clone()).collect())
            .collect()
    }

    /// Short label for plots and reports: the first `n` topic words.
    pub fn label(&self, topic: usize, n: usize) -> String {
        self.top_words[topic]
            .iter()
            .take(n)
            .map(|(w, _)| w.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Largest absolute difference between stored topic vectors and centroids
    /// recomputed from `docs_emb`.
    pub fn centroid_deviation(&self, docs_emb: &EmbeddingMatrix) -> Result<f64> {
        let fresh = topic_vectors(docs_emb, &self.assignment)?;
        if fresh.dim() != self.topic_vectors.dim() {
            return Err(Error::input("topic count or dim differs from assignment"));
        }
        Ok(fresh
            .iter()
            .zip(&self.topic_vectors)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Nearest topic by cosine for every document, noise included. For
    /// display only; topic vectors are not affected.
    pub fn display_labels(&self, docs_emb: &EmbeddingMatrix) -> Vec<usize> {
        docs_emb
            .rows()
            .outer_iter()
            .map(|row| {
                let mut best = (0, f64::NEG_INFINITY);
                for (t, tv) in self.topic_vectors.outer_iter().enumerate() {
                    let c = cosine_views(row, tv);
                    if c > best.1 {
                        best = (t, c);
                    }
                }
                best.0
            })
            .collect()
    }
}

fn cosine_views(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (l2_norm(a) * l2_norm(b))
}

fn member_positions(
    docs_emb: &EmbeddingMatrix,
    assignment: &ClusterAssignment,
) -> Result<Vec<Vec<usize>>> {
    let index = docs_emb.index();
    let mut members = vec![Vec::new(); assignment.k];
    for (id, &label) in assignment.item_ids.iter().zip(&assignment.labels) {
        if label == NOISE {
            continue;
        }
        let pos = *index
            .get(id.as_str())
            .ok_or_else(|| Error::input(format!("document {id:?} has no embedding")))?;
        let t = usize::try_from(label)
            .ok()
            .filter(|&t| t < assignment.k)
            .ok_or_else(|| Error::input(format!("label {label} out of range")))?;
        members[t].push(pos);
    }
    Ok(members)
}

fn centroid(docs_emb: &EmbeddingMatrix, members: &[usize]) -> Array1<f64> {
    let mut sum = Array1::zeros(docs_emb.dim());
    for &p in members {
        sum += &docs_emb.row(p);
    }
    sum / members.len() as f64
}

/// Row `t` is the mean of the original-space vectors of documents labelled `t`.
pub fn topic_vectors(docs_emb: &EmbeddingMatrix, assignment: &ClusterAssignment) -> Result<Array2<f64>> {
    let members = member_positions(docs_emb, assignment)?;
    let mut out = Array2::zeros((assignment.k, docs_emb.dim()));
    for (t, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::input(format!("topic {t} has no documents")));
        }
        out.row_mut(t).assign(&centroid(docs_emb, m));
    }
    Ok(out)
}

/// For each topic vector, the `n` words with the highest cosine similarity,
/// best first; equal scores keep word-matrix order.
pub fn top_words(tv: &Array2<f64>, words: &EmbeddingMatrix, n: usize) -> Result<Vec<Vec<(String, f64)>>> {
    if tv.ncols() != words.dim() {
        return Err(Error::input(format!(
            "topic dim {} differs from word dim {}",
            tv.ncols(),
            words.dim()
        )));
    }
    if n == 0 || n > words.len() {
        return Err(Error::param(format!(
            "requested {n} topic words from a vocabulary of {}",
            words.len()
        )));
    }
    let word_norms: Vec<f64> = words.rows().outer_iter().map(l2_norm).collect();
    tv.outer_iter()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(t, v)| {
            let vn = l2_norm(v);
            if vn == 0.0 {
                return Err(Error::input(format!("topic {t} has a zero vector")));
            }
            let mut scored: Vec<(usize, f64)> = words
                .rows()
                .outer_iter()
                .zip(&word_norms)
                .map(|(w, &wn)| v.dot(&w) / (vn * wn))
                .enumerate()
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            Ok(scored
                .into_iter()
                .take(n)
                .map(|(i, s)| (words.item_ids()[i].clone(), s))
                .collect())
        })
        .collect()
}

pub fn build_topic_model(
    docs_emb: &EmbeddingMatrix,
    words: &EmbeddingMatrix,
    assignment: ClusterAssignment,
    n: usize,
    provenance: Provenance,
) -> Result<TopicModel> {
    assignment.validate()?;
    if assignment.k == 0 {
        return Err(Error::input("clustering produced no topics"));
    }
    let tv = topic_vectors(docs_emb, &assignment)?;
    let top = top_words(&tv, words, n)?;
    Ok(TopicModel {
        topic_vectors: tv,
        assignment,
        top_words: top,
        provenance,
        merges: Vec::new(),
    })
}

/// Repeatedly merges the smallest topic into its most cosine-similar topic
/// until `target_k` remain. Ties pick the lower index.
pub fn reduce_topics(
    model: &TopicModel,
    docs_emb: &EmbeddingMatrix,
    words: &EmbeddingMatrix,
    target_k: usize,
) -> Result<TopicModel> {
    let k = model.n_topics();
    if target_k == 0 || target_k >= k {
        return Err(Error::param(format!(
            "target topic count {target_k} must lie in 1..{k}"
        )));
    }
    let mut members = member_positions(docs_emb, &model.assignment)?;
    let mut vectors: Vec<Array1<f64>> = members.iter().map(|m| centroid(docs_emb, m)).collect();
    let mut merges = model.merges.clone();
    while vectors.len() > target_k {
        let smallest = (0..members.len())
            .min_by(|&a, &b| members[a].len().cmp(&members[b].len()).then(a.cmp(&b)))
            .expect("at least two topics");
        let mut nearest = (usize::MAX, f64::NEG_INFINITY);
        for t in (0..vectors.len()).filter(|&t| t != smallest) {
            let c = cosine_views(vectors[smallest].view(), vectors[t].view());
            if c > nearest.1 {
                nearest = (t, c);
            }
        }
        let into = nearest.0;
        merges.push(MergeStep {
            removed: smallest,
            into,
        });
        let moved = members.remove(smallest);
        vectors.remove(smallest);
        let into = if into > smallest { into - 1 } else { into };
        members[into].extend(moved);
        members[into].sort_unstable();
        vectors[into] = centroid(docs_emb, &members[into]);
    }

    let mut label_of = HashMap::new();
    for (t, m) in members.iter().enumerate() {
        for &p in m {
            label_of.insert(p, t as i64);
        }
    }
    let index = docs_emb.index();
    let labels = model
        .assignment
        .item_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .and_then(|p| label_of.get(p))
                .copied()
                .unwrap_or(NOISE)
        })
        .collect();
    let assignment = ClusterAssignment {
        item_ids: model.assignment.item_ids.clone(),
        labels,
        k: target_k,
        method: model.assignment.method,
        params: model.assignment.params.clone(),
    };
    let mut tv = Array2::zeros((target_k, docs_emb.dim()));
    for (t, v) in vectors.iter().enumerate() {
        tv.row_mut(t).assign(v);
    }
    let n = model.top_words.first().map_or(DEFAULT_TOP_WORDS, Vec::len);
    let top = top_words(&tv, words, n)?;
    Ok(TopicModel {
        topic_vectors: tv,
        assignment,
        top_words: top,
        provenance: model.provenance.clone(),
        merges,
    })
}

/// Minimum-cluster-size × min-samples grid searched by default.
pub fn default_sweep_grid() -> Vec<HdbscanParams> {
    let mut grid = Vec::new();
    for min_cluster_size in [5, 10, 15, 20, 25] {
        for min_samples in [3, 5, 8] {
            grid.push(HdbscanParams {
                min_cluster_size,
                min_samples,
            });
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: HdbscanParams,
    pub n_topics: usize,
    pub noise: usize,
    /// `None` when the grid point yields no topics or cannot run.
    pub mean_coherence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<SweepPoint>,
    pub best: usize,
}

impl SweepResult {
    pub fn best_point(&self) -> &SweepPoint {
        &self.grid[self.best]
    }
}

/// Runs HDBSCAN for every grid point on one reduction and scores the
/// resulting topics by mean TC-NPMI over their first `top_n` words. The best
/// point maximises coherence; ties go to fewer topics, then grid order.
pub fn sweep(
    reduced: &ReducedMatrix,
    docs_emb: &EmbeddingMatrix,
    words: &EmbeddingMatrix,
    idx: &WindowIndex,
    grid: &[HdbscanParams],
    top_n: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::param("sweep grid is empty"));
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|p| {
            let Ok(assignment) = hdbscan(reduced, p) else {
                return SweepPoint {
                    params: *p,
                    n_topics: 0,
                    noise: reduced.len(),
                    mean_coherence: None,
                };
            };
            let mean_coherence = if assignment.k == 0 {
                None
            } else {
                topic_vectors(docs_emb, &assignment)
                    .and_then(|tv| top_words(&tv, words, top_n))
                    .and_then(|tw| {
                        let lists: Vec<Vec<&str>> = tw
                            .iter()
                            .map(|t| t.iter().map(|(w, _)| w.as_str()).collect())
                            .collect();
                        coherence(&lists, top_n, idx, DEFAULT_EPSILON)
                    })
                    .ok()
                    .map(|r| r.mean)
            };
            SweepPoint {
                params: *p,
                n_topics: assignment.k,
                noise: assignment.noise_count(),
                mean_coherence,
            }
        })
        .collect();
    let best = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.mean_coherence.map(|c| (i, c, p.n_topics)))
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(b.2.cmp(&a.2))
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _, _)| i)
        .ok_or_else(|| Error::input("no sweep grid point produced any topics"))?;
    Ok(SweepResult { grid: points, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicJson {
    pub id: usize,
    pub size: usize,
    pub vector_dim: usize,
    pub top_words: Vec<(String, f64)>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentJson {
    pub method: ClusterMethod,
    pub params: ClusterParams,
    pub item_ids: Vec<String>,
    pub labels: Vec<i64>,
}

/// On-disk topic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelJson {
    pub topics: Vec<TopicJson>,
    pub noise: usize,
    pub merges: Vec<MergeStep>,
    pub assignment: AssignmentJson,
    pub provenance: Provenance,
}

impl From<&TopicModel> for TopicModelJson {
    fn from(m: &TopicModel) -> Self {
        let sizes = m.sizes();
        TopicModelJson {
            topics: (0..m.n_topics())
                .map(|t| TopicJson {
                    id: t,
                    size: sizes[t],
                    vector_dim: m.dim(),
                    top_words: m.top_words[t].clone(),
                    vector: m.topic_vectors.row(t).to_vec(),
                })
                .collect(),
            noise: m.assignment.noise_count(),
            merges: m.merges.clone(),
            assignment: AssignmentJson {
                method: m.assignment.method,
                params: m.assignment.params.clone(),
                item_ids: m.assignment.item_ids.clone(),
                labels: m.assignment.labels.clone(),
            },
            provenance: m.provenance.clone(),
        }
    }
}

impl TryFrom<TopicModelJson> for TopicModel {
    type Error = Error;

    fn try_from(j: TopicModelJson) -> Result<Self> {
        let k = j.topics.len();
        let dim = j.topics.first().map_or(0, |t| t.vector.len());
        let mut tv = Array2::zeros((k, dim));
        for (t, topic) in j.topics.iter().enumerate() {
            if topic.id != t || topic.vector.len() != dim || topic.vector_dim != dim {
                return Err(Error::Format(format!("topic {t}: inconsistent id or vector")));
            }
            tv.row_mut(t).assign(&ArrayView1::from(&topic.vector[..]));
        }
        let assignment = ClusterAssignment {
            item_ids: j.assignment.item_ids,
            labels: j.assignment.labels,
            k,
            method: j.assignment.method,
            params: j.assignment.params,
        };
        assignment.validate()?;
        Ok(TopicModel {
            topic_vectors: tv,
            assignment,
            top_words: j.topics.into_iter().map(|t| t.top_words).collect(),
            provenance: j.provenance,
            merges: j.merges,
        })
    }
}

pub fn topic_model_to_json(m: &TopicModel) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&TopicModelJson::from(m))?;
    s.push('\n');
    Ok(s)
}

pub fn topic_model_from_json(src: &str) -> Result<TopicModel> {
    let j: TopicModelJson = serde_json::from_str(src)?;
    TopicModel::try_from(j)
}
