//! Flag and config resolution.

use std::path::PathBuf;

use clap::Args;
use crosstopic::cluster::{ClusterMethod, HdbscanParams};
use crosstopic::corpus::{SegmentMode, DEFAULT_MAX_TOKENS};
use crosstopic::embed::DEFAULT_MIN_WORD_COUNT;
use crosstopic::reduce::{ReduceMethod, UmapParams};

use crate::config::{Config, DEFAULT_LDA_ITERS, DEFAULT_SEED, DEFAULT_TOPN, DEFAULT_WINDOW};
use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    /// TOML file with default values for any of these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus file: raw verse-numbered text or a document JSONL. Repeatable.
    #[arg(long, global = true)]
    pub corpus: Vec<PathBuf>,
    /// Document embeddings (EMB1 or JSONL), one per corpus. Repeatable.
    #[arg(long, global = true)]
    pub embeddings: Vec<PathBuf>,
    /// Vocabulary embeddings in the same space as the document embeddings.
    #[arg(long, global = true)]
    pub word_embeddings: Option<PathBuf>,
    /// HTTP embedding endpoint used for vocabulary words when no word
    /// embedding file is given.
    #[arg(long, global = true)]
    pub embed_url: Option<String>,
    /// Identifier of the encoder that produced the embeddings.
    #[arg(long, global = true)]
    pub embedder_id: Option<String>,
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    /// Segmentation of raw corpora: `verse` or `paragraph`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// `pca` or `umap`.
    #[arg(long, global = true)]
    pub reducer: Option<String>,
    /// `kmeans` or `hdbscan`.
    #[arg(long, global = true)]
    pub clusterer: Option<String>,
    /// Cluster count for k-means, topic count for LDA.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Words per topic (default 50).
    #[arg(long, global = true)]
    pub topn: Option<usize>,
    /// Coherence window size in tokens (default 110).
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub n_components: Option<usize>,
    #[arg(long, global = true)]
    pub n_neighbors: Option<usize>,
    #[arg(long, global = true)]
    pub min_dist: Option<f64>,
    #[arg(long, global = true)]
    pub n_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub min_cluster_size: Option<usize>,
    #[arg(long, global = true)]
    pub min_samples: Option<usize>,
    #[arg(long, global = true)]
    pub min_word_count: Option<usize>,
    /// Merge topics down to this count after clustering.
    #[arg(long, global = true)]
    pub reduce_to: Option<usize>,
    /// Iteration budget for k-means and LDA.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub out: PathBuf,
    pub seed: u64,
    pub corpus: Vec<PathBuf>,
    pub embeddings: Vec<PathBuf>,
    pub word_embeddings: Option<PathBuf>,
    pub embed_url: Option<String>,
    pub embedder_id: Option<String>,
    pub stopwords: Option<PathBuf>,
    pub mode: SegmentMode,
    pub max_tokens: usize,
    pub reducer: ReduceMethod,
    pub clusterer: ClusterMethod,
    pub k: Option<usize>,
    pub topn: usize,
    pub window: usize,
    pub umap: UmapParams,
    pub pca_components: usize,
    pub hdbscan: HdbscanParams,
    pub min_word_count: usize,
    pub reduce_to: Option<usize>,
    pub iters: Option<usize>,
}

impl Settings {
    pub fn resolve(flags: &CommonFlags) -> CliResult<Self> {
        let cfg = match &flags.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let pick_vec = |flag: &Vec<PathBuf>, cfg: &Option<Vec<PathBuf>>| {
            if flag.is_empty() {
                cfg.clone().unwrap_or_default()
            } else {
                flag.clone()
            }
        };
        let seed = flags.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
        let mode = match flags.mode.as_deref().or(cfg.mode.as_deref()).unwrap_or("verse") {
            "verse" => SegmentMode::VerseNumbered,
            "paragraph" => SegmentMode::Paragraph,
            other => return Err(CliError::param(format!("unknown mode {other:?}"))),
        };
        let reducer: ReduceMethod = flags
            .reducer
            .as_deref()
            .or(cfg.reducer.as_deref())
            .unwrap_or("umap")
            .parse()?;
        let clusterer: ClusterMethod = flags
            .clusterer
            .as_deref()
            .or(cfg.clusterer.as_deref())
            .unwrap_or("hdbscan")
            .parse()?;
        let defaults = UmapParams::default();
        let n_components = flags.n_components.or(cfg.n_components);
        let umap = UmapParams {
            n_neighbors: flags.n_neighbors.or(cfg.n_neighbors).unwrap_or(defaults.n_neighbors),
            min_dist: flags.min_dist.or(cfg.min_dist).unwrap_or(defaults.min_dist),
            n_components: n_components.unwrap_or(defaults.n_components),
            n_epochs: flags.n_epochs.or(cfg.n_epochs).unwrap_or(defaults.n_epochs),
            seed,
            ..defaults
        };
        umap.validate()?;
        let hd = HdbscanParams::default();
        let hdbscan = HdbscanParams {
            min_cluster_size: flags
                .min_cluster_size
                .or(cfg.min_cluster_size)
                .unwrap_or(hd.min_cluster_size),
            min_samples: flags.min_samples.or(cfg.min_samples).unwrap_or(hd.min_samples),
        };
        hdbscan.validate()?;
        let topn = flags.topn.or(cfg.topn).unwrap_or(DEFAULT_TOPN);
        let window = flags.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW);
        if topn < 2 {
            return Err(CliError::param("topn must be at least 2"));
        }
        if window < 2 {
            return Err(CliError::param("window must be at least 2"));
        }
        Ok(Settings {
            out: flags
                .out
                .clone()
                .or(cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            seed,
            corpus: pick_vec(&flags.corpus, &cfg.corpus),
            embeddings: pick_vec(&flags.embeddings, &cfg.embeddings),
            word_embeddings: flags.word_embeddings.clone().or(cfg.word_embeddings.clone()),
            embed_url: flags.embed_url.clone().or(cfg.embed_url.clone()),
            embedder_id: flags.embedder_id.clone().or(cfg.embedder_id.clone()),
            stopwords: flags.stopwords.clone().or(cfg.stopwords.clone()),
            mode,
            max_tokens: DEFAULT_MAX_TOKENS,
            reducer,
            clusterer,
            k: flags.k.or(cfg.k),
            topn,
            window,
            umap,
            pca_components: n_components.unwrap_or(defaults.n_components),
            hdbscan,
            min_word_count: flags
                .min_word_count
                .or(cfg.min_word_count)
                .unwrap_or(DEFAULT_MIN_WORD_COUNT),
            reduce_to: flags.reduce_to.or(cfg.reduce_to),
            iters: flags.iters.or(cfg.iters),
        })
    }

    pub fn lda_iters(&self) -> usize {
        self.iters.unwrap_or(DEFAULT_LDA_ITERS)
    }

    pub fn require_corpus(&self) -> CliResult<&[PathBuf]> {
        if self.corpus.is_empty() {
            return Err(CliError::missing("no --corpus given"));
        }
        Ok(&self.corpus)
    }

    /// Corpora paired with their document embeddings, by position.
    pub fn corpus_embedding_pairs(&self) -> CliResult<Vec<(PathBuf, PathBuf)>> {
        let corpora = self.require_corpus()?;
        if self.embeddings.is_empty() {
            return Err(CliError::missing("no --embeddings given"));
        }
        if self.embeddings.len() != corpora.len() {
            return Err(CliError::param(format!(
                "{} corpora but {} embedding files",
                corpora.len(),
                self.embeddings.len()
            )));
        }
        Ok(corpora.iter().cloned().zip(self.embeddings.iter().cloned()).collect())
    }
}
