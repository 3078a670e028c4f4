#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn fixtures() -> PathBuf {
    workspace_root().join("fixtures")
}

pub fn fixture_config() -> PathBuf {
    fixtures().join("pipeline.toml")
}

pub const CORPORA: [&str; 2] = ["dialogue", "forest_teachings"];

pub fn corpus_path(name: &str) -> PathBuf {
    fixtures().join("corpora").join(format!("{name}.txt"))
}

pub fn docs_emb_path(name: &str) -> PathBuf {
    fixtures()
        .join("embeddings")
        .join(format!("{name}.docs.emb"))
}

pub fn words_emb_path() -> PathBuf {
    fixtures().join("embeddings").join("vocab.words.emb")
}

pub fn crosstopic<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_crosstopic"))
        .args(args)
        .output()
        .expect("spawn crosstopic")
}

/// Runs the binary and panics with its stderr on failure.
pub fn crosstopic_ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = crosstopic(args);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Relative path → file contents, for every file below `dir`.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// Schema file that governs an output file, chosen by name.
pub fn schema_for(file: &Path) -> Option<&'static str> {
    let name = file.file_name()?.to_str()?;
    let table: [(&str, &str); 9] = [
        (".emb.manifest.json", "embedding_manifest"),
        (".manifest.json", "manifest"),
        (".topics.json", "topic_model"),
        (".coherence.json", "coherence"),
        (".similarity.json", "similarity"),
        (".lda.json", "lda_model"),
        (".stats.json", "corpus_stats"),
        (".sweep.json", "sweep"),
        (".json", "ngrams"),
    ];
    table
        .iter()
        .find(|(suffix, _)| name.ends_with(suffix))
        .map(|(_, schema)| *schema)
        .filter(|s| *s != "ngrams" || name.contains(".ngrams"))
}

pub fn load_schema(name: &str) -> serde_json::Value {
    let path = workspace_root()
        .join("schemas")
        .join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Validates every JSON file below `dir` against its schema. Returns the
/// number of files checked.
pub fn validate_tree(dir: &Path) -> Result<usize, String> {
    let mut checked = 0;
    for (rel, bytes) in tree(dir) {
        if rel.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let schema = schema_for(&rel).ok_or_else(|| format!("no schema for {}", rel.display()))?;
        let validator =
            jsonschema::validator_for(&load_schema(schema)).map_err(|e| e.to_string())?;
        let doc: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        let errors: Vec<String> = validator
            .iter_errors(&doc)
            .map(|e| format!("{e} at {}", e.instance_path()))
            .collect();
        if !errors.is_empty() {
            return Err(format!(
                "{} vs {schema}: {}",
                rel.display(),
                errors.join("; ")
            ));
        }
        checked += 1;
    }
    Ok(checked)
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
