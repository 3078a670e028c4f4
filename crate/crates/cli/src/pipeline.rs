//! Input loading, provenance and the shared topic pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crosstopic::cluster::{hdbscan, kmeans, ClusterMethod, DEFAULT_KMEANS_ITERS};
use crosstopic::coherence::{coherence, CoherenceReport, WindowIndex, DEFAULT_EPSILON};
use crosstopic::corpus::{
    build_corpus, default_stopwords, parse_stopwords, read_documents_jsonl, segment, Corpus,
    SegmentOptions,
};
use crosstopic::embed::{
    candidate_words, embed_vocabulary, embed_words, read_embeddings, EmbeddingMatrix, HttpProvider,
    TableProvider,
};
use crosstopic::reduce::{ReduceMethod, ReducedMatrix, Reducer};
use crosstopic::topics::{build_topic_model, reduce_topics, Provenance, TopicModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

pub const UNSPECIFIED_EMBEDDER: &str = "unspecified";

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::missing(format!("{}: {e}", path.display())))
}

pub fn read_string(path: &Path) -> CliResult<String> {
    String::from_utf8(read_bytes(path)?)
        .map_err(|e| CliError::format(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Input file name → content digest, for provenance records. Keys are bare
/// file names so that outputs do not depend on where inputs live.
#[derive(Debug, Clone, Default)]
pub struct Inputs(pub BTreeMap<String, String>);

impl Inputs {
    pub fn add(&mut self, path: &Path) -> CliResult<()> {
        let digest = format!("sha256:{}", sha256_hex(&read_bytes(path)?));
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        // Same name, different content: fall back to the full path.
        let key = match self.0.get(&name) {
            Some(existing) if *existing != digest => path.display().to_string(),
            _ => name,
        };
        self.0.insert(key, digest);
        Ok(())
    }
}

/// Provenance for artifacts other than topic models.
#[derive(Debug, Clone, Serialize)]
pub struct RunProvenance {
    pub command: &'static str,
    pub params: serde_json::Value,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
}

impl RunProvenance {
    pub fn new(command: &'static str, params: serde_json::Value, seed: u64, inputs: &Inputs) -> Self {
        RunProvenance {
            command,
            params,
            seed,
            inputs: inputs.0.clone(),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serialises")
    }
}

/// File name up to the first dot: `dialogue.topics.json` → `dialogue`.
pub fn stem(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.split('.').next().unwrap_or(n).to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "corpus".to_owned())
}

pub fn load_stopwords(settings: &Settings, inputs: &mut Inputs) -> CliResult<std::collections::BTreeSet<String>> {
    match &settings.stopwords {
        Some(p) => {
            inputs.add(p)?;
            Ok(parse_stopwords(&read_string(p)?))
        }
        None => Ok(default_stopwords()),
    }
}

/// Reads a corpus: `.jsonl` files hold documents, anything else is raw text
/// that gets segmented.
pub fn load_corpus(path: &Path, settings: &Settings, inputs: &mut Inputs) -> CliResult<Corpus> {
    let src = read_string(path)?;
    inputs.add(path)?;
    let name = stem(path);
    let docs = if path.extension().is_some_and(|e| e == "jsonl") {
        read_documents_jsonl(&src, &name)?
    } else {
        let opts = SegmentOptions {
            max_tokens: settings.max_tokens,
            source: name.clone(),
            ..SegmentOptions::default()
        };
        segment(&src, settings.mode, &opts)?
    };
    let stop = load_stopwords(settings, inputs)?;
    Ok(build_corpus(docs, &name, &stop)?)
}

/// Reads embeddings and keeps the rows of the corpus documents, in corpus
/// order.
pub fn load_doc_embeddings(path: &Path, corpus: &Corpus, inputs: &mut Inputs) -> CliResult<EmbeddingMatrix> {
    let m = read_embeddings(path)?;
    inputs.add(path)?;
    let index = m.index();
    let positions = corpus
        .documents
        .iter()
        .map(|d| {
            index.get(d.id.as_str()).copied().ok_or_else(|| {
                CliError::format(format!("{}: no embedding for document {:?}", path.display(), d.id))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(m.select(&positions)?)
}

/// Embedder id from the flag, else the `model` field of a
/// `<file>.manifest.json` sidecar, else a placeholder.
pub fn embedder_id(settings: &Settings, emb_path: &Path) -> CliResult<String> {
    if let Some(id) = &settings.embedder_id {
        return Ok(id.clone());
    }
    let mut sidecar = emb_path.as_os_str().to_owned();
    sidecar.push(".manifest.json");
    let sidecar = PathBuf::from(sidecar);
    if sidecar.exists() {
        let v: serde_json::Value = serde_json::from_str(&read_string(&sidecar)?)?;
        if let Some(model) = v.get("model").and_then(|m| m.as_str()) {
            return Ok(model.to_owned());
        }
        return Err(CliError::format(format!("{}: no \"model\" field", sidecar.display())));
    }
    Ok(UNSPECIFIED_EMBEDDER.to_owned())
}

pub fn reducer(settings: &Settings) -> Reducer {
    match settings.reducer {
        ReduceMethod::Pca => Reducer::Pca {
            n_components: settings.pca_components,
        },
        ReduceMethod::Umap => Reducer::Umap(settings.umap.clone()),
    }
}

/// Document and word embeddings for one corpus, plus the embedder id.
pub struct Prepared {
    pub corpus: Corpus,
    pub docs: EmbeddingMatrix,
    pub words: EmbeddingMatrix,
    pub embedder: String,
    pub inputs: Inputs,
}

pub fn prepare(corpus_path: &Path, emb_path: &Path, settings: &Settings) -> CliResult<Prepared> {
    let mut inputs = Inputs::default();
    let corpus = load_corpus(corpus_path, settings, &mut inputs)?;
    let docs = load_doc_embeddings(emb_path, &corpus, &mut inputs)?;
    let embedder = embedder_id(settings, emb_path)?;
    let joint = match (&settings.word_embeddings, &settings.embed_url) {
        (Some(p), _) => {
            let table = read_embeddings(p)?;
            inputs.add(p)?;
            let provider = TableProvider::new(embedder.clone(), table);
            // Only words the table knows are eligible.
            let words = candidate_words(&corpus, settings.min_word_count)
                .into_iter()
                .filter(|w| provider.contains(w))
                .collect();
            embed_words(words, &docs, &provider)?
        }
        (None, Some(url)) => {
            let provider = HttpProvider::new(embedder.clone(), url.clone());
            embed_vocabulary(&corpus, &docs, &provider, settings.min_word_count)?
        }
        (None, None) => {
            return Err(CliError::missing(
                "vocabulary embeddings needed: pass --word-embeddings or --embed-url",
            ))
        }
    };
    Ok(Prepared {
        corpus,
        docs: joint.docs,
        words: joint.words,
        embedder,
        inputs,
    })
}

pub fn reduce(prepared: &Prepared, settings: &Settings) -> CliResult<ReducedMatrix> {
    Ok(reducer(settings).apply(&prepared.docs)?)
}

pub fn pipeline_params(settings: &Settings) -> serde_json::Value {
    let cluster = match settings.clusterer {
        ClusterMethod::Kmeans => serde_json::json!({
            "k": settings.k,
            "iters": settings.iters.unwrap_or(DEFAULT_KMEANS_ITERS),
        }),
        ClusterMethod::Hdbscan => serde_json::to_value(settings.hdbscan).expect("serialises"),
    };
    serde_json::json!({
        "reducer": reducer(settings),
        "cluster": cluster,
        "topn": settings.topn,
        "window": settings.window,
        "min_word_count": settings.min_word_count,
        "reduce_to": settings.reduce_to,
    })
}

pub struct TopicRun {
    pub model: TopicModel,
    pub coherence: CoherenceReport,
}

/// Reduce, cluster, build topics (optionally merging down), and score them
/// against the corpus itself.
pub fn run_topics(prepared: &Prepared, settings: &Settings) -> CliResult<TopicRun> {
    let reduced = reduce(prepared, settings)?;
    let assignment = match settings.clusterer {
        ClusterMethod::Kmeans => {
            let k = settings
                .k
                .ok_or_else(|| CliError::param("--k is required with --clusterer kmeans"))?;
            kmeans(&reduced, k, settings.iters.unwrap_or(DEFAULT_KMEANS_ITERS), settings.seed)?
        }
        ClusterMethod::Hdbscan => hdbscan(&reduced, &settings.hdbscan)?,
    };
    let topn = settings.topn.min(prepared.words.len());
    let provenance = Provenance {
        embedder: prepared.embedder.clone(),
        reducer: settings.reducer.to_string(),
        clusterer: settings.clusterer.to_string(),
        params: pipeline_params(settings),
        seed: settings.seed,
        inputs: prepared.inputs.0.clone(),
    };
    let mut model = build_topic_model(&prepared.docs, &prepared.words, assignment, topn, provenance)?;
    if let Some(target) = settings.reduce_to {
        if target < model.n_topics() {
            model = reduce_topics(&model, &prepared.docs, &prepared.words, target)?;
        }
    }
    let idx = WindowIndex::build(&prepared.corpus, settings.window, 1)?;
    let coherence = coherence(&model.word_lists(), topn, &idx, DEFAULT_EPSILON)?;
    Ok(TopicRun { model, coherence })
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::missing(format!("{}: {e}", dir.display())))
}

pub fn write_out(dir: &Path, name: &str, contents: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> CliResult<()> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::missing(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
