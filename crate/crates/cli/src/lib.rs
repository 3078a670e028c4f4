//! The `crosstopic` command line: subcommands over the topic engine, with
//! flag/config resolution, provenance and exit codes.

mod config;
mod error;
mod pipeline;
mod settings;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use crosstopic::cluster::NOISE;
use crosstopic::coherence::{coherence, WindowIndex, DEFAULT_EPSILON};
use crosstopic::compare::similarity_matrix;
use crosstopic::corpus::{ngrams, write_documents_jsonl};
use crosstopic::embed::read_embeddings;
use crosstopic::lda::{lda_fit, LdaModelJson};
use crosstopic::reduce::project_2d;
use crosstopic::report::{heatmap_svg, ngram_csv, projection_csv, scatter_svg, stats_csv};
use crosstopic::topics::{default_sweep_grid, sweep, topic_model_from_json, topic_model_to_json, TopicModel};
use serde_json::json;

pub use config::{Config, DEFAULT_LDA_ITERS, DEFAULT_SEED, DEFAULT_TOPN, DEFAULT_WINDOW};
pub use error::{exit, CliError, CliResult};
pub use settings::{CommonFlags, Settings};

use pipeline::{
    load_corpus, prepare, read_string, reduce, run_topics, sha256_hex, stem, to_json_pretty, write_out, Inputs,
    RunProvenance,
};

/// Words shown in plot legends.
const LEGEND_WORDS: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "crosstopic", version, about = "Cross-corpus topic modelling over sentence embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: CommonFlags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment and clean corpora; write document JSONL and statistics.
    Ingest,
    /// Most frequent n-grams per corpus.
    Ngrams {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Count stopwords too.
        #[arg(long)]
        keep_stopwords: bool,
    },
    /// Full pipeline: reduce, cluster, topic words and coherence.
    Topics,
    /// HDBSCAN parameter grid scored by coherence.
    Sweep,
    /// Score topic models (embedding or LDA) against a reference corpus.
    Coherence {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Variational LDA baseline.
    Lda,
    /// Topic similarity between two topic models.
    Compare {
        #[arg(long = "model", required = true, num_args = 1)]
        models: Vec<PathBuf>,
    },
    /// 2-D scatter of documents coloured by topic.
    Project {
        #[arg(long)]
        model: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Ngrams { .. } => "ngrams",
            Command::Topics => "topics",
            Command::Sweep => "sweep",
            Command::Coherence { .. } => "coherence",
            Command::Lda => "lda",
            Command::Compare { .. } => "compare",
            Command::Project { .. } => "project",
        }
    }
}

/// Runs one parsed invocation and returns the files written, in order.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let settings = Settings::resolve(&cli.flags)?;
    let mut written = Vec::new();
    match &cli.command {
        Command::Ingest => ingest(&settings, &mut written)?,
        Command::Ngrams { n, top, keep_stopwords } => {
            ngram_tables(&settings, *n, *top, !keep_stopwords, &mut written)?
        }
        Command::Topics => topics(&settings, &mut written)?,
        Command::Sweep => sweep_cmd(&settings, &mut written)?,
        Command::Coherence { models } => coherence_cmd(&settings, models, &mut written)?,
        Command::Lda => lda_cmd(&settings, &mut written)?,
        Command::Compare { models } => compare(&settings, models, &mut written)?,
        Command::Project { model } => project(&settings, model, &mut written)?,
    }
    write_manifest(&settings, cli.command.name(), &mut written)?;
    Ok(written)
}

/// Parses `args` (program name first) and runs them. Returns the exit code,
/// printing written paths to stdout and a one-line JSON error to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return exit::OK;
            }
            let err = CliError::param(e.to_string().lines().next().unwrap_or("bad arguments").to_owned());
            eprintln!("{}", err.to_json_line());
            return err.code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            for f in files {
                // A closed stdout is not a pipeline failure.
                let _ = writeln!(out, "{}", f.display());
            }
            exit::OK
        }
        Err(err) => {
            eprintln!("{}", err.to_json_line());
            err.code
        }
    }
}

/// Every invocation also writes `<command>.manifest.json`: the provenance of
/// the run plus a digest of each artifact, covering formats (CSV, JSONL, SVG)
/// that cannot carry provenance themselves.
fn write_manifest(settings: &Settings, command: &'static str, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut artifacts = serde_json::Map::new();
    for path in written.iter() {
        let bytes = std::fs::read(path).map_err(|e| CliError::missing(format!("{}: {e}", path.display())))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        artifacts.insert(name, json!(format!("sha256:{}", sha256_hex(&bytes))));
    }
    let mut inputs = Inputs::default();
    for p in settings
        .corpus
        .iter()
        .chain(&settings.embeddings)
        .chain(&settings.word_embeddings)
        .chain(&settings.stopwords)
    {
        if p.exists() {
            inputs.add(p)?;
        }
    }
    let manifest = json!({
        "command": command,
        "artifacts": artifacts,
        "provenance": RunProvenance::new(command, settings_params(settings), settings.seed, &inputs),
    });
    write_out(&settings.out, &format!("{command}.manifest.json"), to_json_pretty(&manifest)?, written)
}

fn settings_params(s: &Settings) -> serde_json::Value {
    let mut v = pipeline::pipeline_params(s);
    v["reducer_name"] = json!(s.reducer.to_string());
    v["clusterer_name"] = json!(s.clusterer.to_string());
    v["mode"] = json!(format!("{:?}", s.mode));
    v
}

fn ingest(settings: &Settings, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut all = Vec::new();
    for path in settings.require_corpus()? {
        let mut inputs = Inputs::default();
        let corpus = load_corpus(path, settings, &mut inputs)?;
        let name = &corpus.name;
        write_out(&settings.out, &format!("{name}.jsonl"), write_documents_jsonl(&corpus.documents)?, written)?;
        let prov = RunProvenance::new("ingest", json!({ "mode": format!("{:?}", settings.mode) }), settings.seed, &inputs);
        let stats = json!({ "stats": corpus.stats, "provenance": prov });
        write_out(&settings.out, &format!("{name}.stats.json"), to_json_pretty(&stats)?, written)?;
        all.push(corpus.stats);
    }
    write_out(&settings.out, "stats.csv", stats_csv(&all), written)
}

fn ngram_tables(
    settings: &Settings,
    n: usize,
    top: usize,
    drop_stopwords: bool,
    written: &mut Vec<PathBuf>,
) -> CliResult<()> {
    for path in settings.require_corpus()? {
        let mut inputs = Inputs::default();
        let corpus = load_corpus(path, settings, &mut inputs)?;
        let table = ngrams(&corpus, n, top, drop_stopwords)?;
        let name = &corpus.name;
        write_out(&settings.out, &format!("{name}.ngrams{n}.csv"), ngram_csv(&table), written)?;
        let prov = RunProvenance::new(
            "ngrams",
            json!({ "n": n, "top": top, "drop_stopwords": drop_stopwords }),
            settings.seed,
            &inputs,
        );
        let j = json!({ "ngrams": table, "provenance": prov });
        write_out(&settings.out, &format!("{name}.ngrams{n}.json"), to_json_pretty(&j)?, written)?;
    }
    Ok(())
}

fn topics(settings: &Settings, written: &mut Vec<PathBuf>) -> CliResult<()> {
    for (corpus_path, emb_path) in settings.corpus_embedding_pairs()? {
        let prepared = prepare(&corpus_path, &emb_path, settings)?;
        let run = run_topics(&prepared, settings)?;
        let name = &prepared.corpus.name;
        write_out(&settings.out, &format!("{name}.topics.json"), topic_model_to_json(&run.model)?, written)?;
        let mut csv = Vec::new();
        run.model
            .assignment
            .write_csv(&mut csv)
            .map_err(|e| CliError::format(e.to_string()))?;
        write_out(&settings.out, &format!("{name}.assignments.csv"), csv, written)?;
        let j = json!({ "coherence": run.coherence, "provenance": run.model.provenance });
        write_out(&settings.out, &format!("{name}.coherence.json"), to_json_pretty(&j)?, written)?;
    }
    Ok(())
}

fn sweep_cmd(settings: &Settings, written: &mut Vec<PathBuf>) -> CliResult<()> {
    for (corpus_path, emb_path) in settings.corpus_embedding_pairs()? {
        let prepared = prepare(&corpus_path, &emb_path, settings)?;
        let reduced = reduce(&prepared, settings)?;
        let idx = WindowIndex::build(&prepared.corpus, settings.window, 1)?;
        let topn = settings.topn.min(prepared.words.len());
        let result = sweep(&reduced, &prepared.docs, &prepared.words, &idx, &default_sweep_grid(), topn)?;
        let mut params = pipeline::pipeline_params(settings);
        params["embedder"] = json!(prepared.embedder);
        let prov = RunProvenance::new("sweep", params, settings.seed, &prepared.inputs);
        let j = json!({ "sweep": result, "provenance": prov });
        let name = &prepared.corpus.name;
        write_out(&settings.out, &format!("{name}.sweep.json"), to_json_pretty(&j)?, written)?;
    }
    Ok(())
}

/// Ranked word lists from a topic model or LDA JSON file.
fn model_word_lists(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let src = read_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&src)?;
    if v.get("K").is_some() {
        let lda: LdaModelJson = serde_json::from_value(v)?;
        Ok(lda
            .topics
            .into_iter()
            .map(|t| t.into_iter().map(|(w, _)| w).collect())
            .collect())
    } else {
        Ok(topic_model_from_json(&src)?.word_lists())
    }
}

fn coherence_cmd(settings: &Settings, models: &[PathBuf], written: &mut Vec<PathBuf>) -> CliResult<()> {
    let corpora = settings.require_corpus()?;
    if corpora.len() != 1 {
        return Err(CliError::param("coherence takes exactly one reference --corpus"));
    }
    let mut base = Inputs::default();
    let corpus = load_corpus(&corpora[0], settings, &mut base)?;
    let idx = WindowIndex::build(&corpus, settings.window, 1)?;
    for path in models {
        let lists = model_word_lists(path)?;
        let shortest = lists.iter().map(Vec::len).min().unwrap_or(0);
        let n = settings.topn.min(shortest);
        let report = coherence(&lists, n, &idx, DEFAULT_EPSILON)?;
        let mut inputs = base.clone();
        inputs.add(path)?;
        let prov = RunProvenance::new(
            "coherence",
            json!({ "topn": n, "window": settings.window, "reference": corpus.name }),
            settings.seed,
            &inputs,
        );
        let j = json!({ "coherence": report, "provenance": prov });
        write_out(&settings.out, &format!("{}.coherence.json", stem_with_kind(path)), to_json_pretty(&j)?, written)?;
    }
    Ok(())
}

/// `dialogue.lda.json` → `dialogue.lda`, `dialogue.topics.json` → `dialogue`.
fn stem_with_kind(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match name.strip_suffix(".lda.json") {
        Some(s) => format!("{s}.lda"),
        None => stem(path),
    }
}

fn lda_cmd(settings: &Settings, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let k = settings.k.ok_or_else(|| CliError::param("lda needs --k"))?;
    for path in settings.require_corpus()? {
        let mut inputs = Inputs::default();
        let corpus = load_corpus(path, settings, &mut inputs)?;
        let model = lda_fit(&corpus, k, settings.lda_iters(), settings.seed)?;
        let topn = settings.topn.min(corpus.vocabulary.len());
        let prov = RunProvenance::new(
            "lda",
            json!({ "K": k, "iters": settings.lda_iters(), "topn": topn }),
            settings.seed,
            &inputs,
        );
        let j = LdaModelJson::from_model(&model, topn, Some(prov.to_value()))?;
        let name = &corpus.name;
        write_out(&settings.out, &format!("{name}.lda.json"), to_json_pretty(&j)?, written)?;
        let idx = WindowIndex::build(&corpus, settings.window, 1)?;
        let lists: Vec<Vec<&str>> = j.topics.iter().map(|t| t.iter().map(|(w, _)| w.as_str()).collect()).collect();
        let report = coherence(&lists, topn, &idx, DEFAULT_EPSILON)?;
        let c = json!({ "coherence": report, "provenance": prov });
        write_out(&settings.out, &format!("{name}.lda.coherence.json"), to_json_pretty(&c)?, written)?;
    }
    Ok(())
}

fn load_model(path: &Path, inputs: &mut Inputs) -> CliResult<TopicModel> {
    let src = read_string(path)?;
    inputs.add(path)?;
    Ok(topic_model_from_json(&src)?)
}

fn compare(settings: &Settings, models: &[PathBuf], written: &mut Vec<PathBuf>) -> CliResult<()> {
    let [a_path, b_path] = models else {
        return Err(CliError::param(format!("compare takes two --model files, got {}", models.len())));
    };
    let mut inputs = Inputs::default();
    let a = load_model(a_path, &mut inputs)?;
    let b = load_model(b_path, &mut inputs)?;
    let report = similarity_matrix(&a, &b)?;
    let prov = json!({
        "command": "compare",
        "seed": settings.seed,
        "inputs": inputs.0,
        "left": a.provenance,
        "right": b.provenance,
    });
    let name = format!("{}_vs_{}", stem(a_path), stem(b_path));
    write_out(&settings.out, &format!("{name}.similarity.json"), report.to_json(prov)?, written)?;
    let mut csv = Vec::new();
    report
        .write_matrix_csv(&mut csv)
        .map_err(|e| CliError::format(e.to_string()))?;
    write_out(&settings.out, &format!("{name}.similarity.csv"), csv, written)?;
    write_out(&settings.out, &format!("{name}.heatmap.svg"), heatmap_svg(&report)?, written)
}

fn project(settings: &Settings, model_path: &Path, written: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let model = load_model(model_path, &mut inputs)?;
    let emb_path = match settings.embeddings.as_slice() {
        [p] => p,
        [] => return Err(CliError::missing("project needs --embeddings")),
        _ => return Err(CliError::param("project takes one --embeddings file")),
    };
    let all = read_embeddings(emb_path)?;
    inputs.add(emb_path)?;
    let index = all.index();
    let positions = model
        .assignment
        .item_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| CliError::format(format!("{}: no embedding for {id:?}", emb_path.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let docs = all.select(&positions)?;
    let proj = project_2d(&docs, settings.reducer, settings.seed)?;
    let labels: Vec<String> = model
        .assignment
        .labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                "noise".to_owned()
            } else {
                format!("{l}: {}", model.label(l as usize, LEGEND_WORDS))
            }
        })
        .collect();
    let name = stem(model_path);
    write_out(&settings.out, &format!("{name}.projection.csv"), projection_csv(&proj, &labels)?, written)?;
    write_out(&settings.out, &format!("{name}.scatter.svg"), scatter_svg(&proj, &labels)?, written)
}
