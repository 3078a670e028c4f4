//! Key-value run configuration. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOPN: usize = 50;
pub const DEFAULT_WINDOW: usize = 110;
pub const DEFAULT_LDA_ITERS: usize = 200;

/// Every key is optional; relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub corpus: Option<Vec<PathBuf>>,
    pub embeddings: Option<Vec<PathBuf>>,
    pub word_embeddings: Option<PathBuf>,
    pub embed_url: Option<String>,
    pub embedder_id: Option<String>,
    pub stopwords: Option<PathBuf>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reducer: Option<String>,
    pub clusterer: Option<String>,
    pub k: Option<usize>,
    pub topn: Option<usize>,
    pub window: Option<usize>,
    pub n_components: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub min_dist: Option<f64>,
    pub n_epochs: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub min_word_count: Option<usize>,
    pub reduce_to: Option<usize>,
    pub iters: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing(format!("config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&src).map_err(|e| CliError::param(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for list in [&mut cfg.corpus, &mut cfg.embeddings].into_iter().flatten() {
            list.iter_mut().for_each(rebase);
        }
        for p in [&mut cfg.word_embeddings, &mut cfg.stopwords, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        Ok(cfg)
    }
}
