//! Dimensionality reduction: exact PCA and a UMAP layout.

mod pca;
mod umap;

pub use pca::{pca, pca_fit, Pca};
pub use umap::{fit_curve_params, knn, smooth_knn, umap, Metric, UmapParams};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMethod {
    Pca,
    Umap,
}

impl std::str::FromStr for ReduceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ReduceMethod::Pca),
            "umap" => Ok(ReduceMethod::Umap),
            other => Err(Error::param(format!("unknown reducer {other:?}"))),
        }
    }
}

impl std::fmt::Display for ReduceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReduceMethod::Pca => "pca",
            ReduceMethod::Umap => "umap",
        })
    }
}

/// Low-dimensional coordinates, row-aligned with the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrix {
    pub item_ids: Vec<String>,
    pub rows: Array2<f64>,
    pub method: ReduceMethod,
    pub seed: u64,
}

impl ReducedMatrix {
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Wraps arbitrary coordinates, e.g. for clustering raw vectors directly.
    pub fn from_embeddings(m: &EmbeddingMatrix) -> Self {
        ReducedMatrix {
            item_ids: m.item_ids().to_vec(),
            rows: m.rows().clone(),
            method: ReduceMethod::Pca,
            seed: 0,
        }
    }
}

/// A configured reduction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Reducer {
    Pca { n_components: usize },
    Umap(UmapParams),
}

impl Reducer {
    pub fn method(&self) -> ReduceMethod {
        match self {
            Reducer::Pca { .. } => ReduceMethod::Pca,
            Reducer::Umap(_) => ReduceMethod::Umap,
        }
    }

    pub fn apply(&self, m: &EmbeddingMatrix) -> Result<ReducedMatrix> {
        match self {
            Reducer::Pca { n_components } => pca(m, *n_components),
            Reducer::Umap(p) => umap(m, p),
        }
    }
}

/// Two-dimensional projection for scatter plots.
pub fn project_2d(m: &EmbeddingMatrix, method: ReduceMethod, seed: u64) -> Result<ReducedMatrix> {
    if m.len() < 3 {
        return Err(Error::param(format!(
            "2-D projection needs at least 3 rows, got {}",
            m.len()
        )));
    }
    match method {
        ReduceMethod::Pca => pca(m, 2),
        ReduceMethod::Umap => {
            let defaults = UmapParams::default();
            let params = UmapParams {
                n_components: 2,
                n_neighbors: defaults.n_neighbors.min(m.len() - 1),
                seed,
                ..defaults
            };
            umap(m, &params)
        }
    }
}
