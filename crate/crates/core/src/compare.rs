//! Cross-corpus topic comparison by cosine similarity of topic vectors.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topics::TopicModel;

pub const LABEL_WORDS: usize = 5;

/// `dot(u, v) / (|u| |v|)`. Not clamped, so the range is `[-1, 1]`.
///
/// The norms are combined under one square root, which makes `cosine(u, u)`
/// exactly 1 since `sqrt(fl(x * x)) == x` in binary floating point.
pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::param(format!("dimension mismatch: {} vs {}", u.len(), v.len())));
    }
    let nu = u.dot(&u);
    let nv = v.dot(&v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::input("cosine of a zero vector"));
    }
    Ok(u.dot(&v) / (nu * nv).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub topic: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Row = topic of the first model, column = topic of the second.
    pub matrix: Array2<f64>,
    pub best_match: Vec<BestMatch>,
    /// Mean of row maxima; directional.
    pub avg_sim: f64,
    pub labels_a: Vec<String>,
    pub labels_b: Vec<String>,
}

/// Compares raw topic-vector matrices.
pub fn similarity(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Array2<f64>, Vec<BestMatch>, f64)> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::input("cannot compare an empty topic set"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::param(format!(
            "topic vector dimension mismatch: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..a.nrows())
        .into_par_iter()
        .map(|i| b.outer_iter().map(|rb| cosine(a.row(i), rb)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let (na, nb) = (a.nrows(), b.nrows());
    let matrix = Array2::from_shape_vec((na, nb), rows.into_iter().flatten().collect())
        .expect("shape matches");
    let best: Vec<BestMatch> = matrix
        .outer_iter()
        .map(|row| {
            let mut m = BestMatch { topic: 0, score: row[0] };
            for (j, &s) in row.iter().enumerate().skip(1) {
                if s > m.score {
                    m = BestMatch { topic: j, score: s };
                }
            }
            m
        })
        .collect();
    let avg = best.iter().map(|m| m.score).sum::<f64>() / best.len() as f64;
    Ok((matrix, best, avg))
}

pub fn similarity_matrix(a: &TopicModel, b: &TopicModel) -> Result<SimilarityReport> {
    let (pa, pb) = (&a.provenance, &b.provenance);
    if pa.embedder != pb.embedder || a.dim() != b.dim() {
        return Err(Error::Provenance {
            left: format!("{} (dim {})", pa.embedder, a.dim()),
            right: format!("{} (dim {})", pb.embedder, b.dim()),
        });
    }
    let (matrix, best_match, avg_sim) = similarity(&a.topic_vectors, &b.topic_vectors)?;
    let labels = |m: &TopicModel| (0..m.n_topics()).map(|t| m.label(t, LABEL_WORDS)).collect();
    Ok(SimilarityReport {
        matrix,
        best_match,
        avg_sim,
        labels_a: labels(a),
        labels_b: labels(b),
    })
}

impl SimilarityReport {
    /// Matrix CSV with a header row of second-model topic ids and a leading
    /// column of first-model topic ids.
    pub fn write_matrix_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "topic")?;
        for j in 0..self.matrix.ncols() {
            write!(out, ",{j}")?;
        }
        writeln!(out)?;
        for (i, row) in self.matrix.outer_iter().enumerate() {
            write!(out, "{i}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_json(&self, provenance: serde_json::Value) -> Result<String> {
        let rows: Vec<ReportRow> = self
            .best_match
            .iter()
            .enumerate()
            .map(|(i, m)| ReportRow {
                topic: i,
                label: self.labels_a[i].clone(),
                best_match: m.topic,
                best_match_label: self.labels_b[m.topic].clone(),
                score: m.score,
            })
            .collect();
        let j = ReportJson {
            avg_sim: self.avg_sim,
            rows,
            matrix: self.matrix.outer_iter().map(|r| r.to_vec()).collect(),
            provenance,
        };
        let mut s = serde_json::to_string_pretty(&j)?;
        s.push('\n');
        Ok(s)
    }
}

/// Reads a matrix CSV produced by [`SimilarityReport::write_matrix_csv`].
pub fn read_matrix_csv(src: &str) -> Result<Array2<f64>> {
    let mut lines = src.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty matrix csv".into()))?;
    let ncols = header.split(',').count().saturating_sub(1);
    let mut values = Vec::new();
    let mut nrows = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').skip(1).collect();
        if cells.len() != ncols {
            return Err(Error::Format(format!("row {nrows} has {} cells", cells.len())));
        }
        for c in cells {
            values.push(c.parse::<f64>().map_err(|e| Error::Format(format!("{c}: {e}")))?);
        }
        nrows += 1;
    }
    Array2::from_shape_vec((nrows, ncols), values).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub topic: usize,
    pub label: String,
    pub best_match: usize,
    pub best_match_label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub avg_sim: f64,
    pub rows: Vec<ReportRow>,
    pub matrix: Vec<Vec<f64>>,
    pub provenance: serde_json::Value,
}
