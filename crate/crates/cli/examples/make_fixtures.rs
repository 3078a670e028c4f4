//! Regenerates the bundled fixture corpora and their embeddings.
//!
//! Two verse-numbered corpora are drawn from a fixed set of themes, some of
//! them shared, and embedded with latent semantic analysis (TF-IDF followed
//! by a truncated eigendecomposition of the document Gram matrix). Documents
//! and words live in the same space, so the vocabulary table can stand in
//! for a sentence encoder.
//!
//! Usage: `cargo run -p crosstopic-cli --example make_fixtures -- [OUT_DIR]`

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crosstopic::corpus::{build_corpus, default_stopwords, segment, Corpus, SegmentMode, SegmentOptions};
use crosstopic::embed::{write_embeddings, EmbeddingMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

const SEED: u64 = 20_240_917;
const DIM: usize = 48;
const MODEL_ID: &str = "lsa-tfidf-48";
const WORDS_PER_THEME: usize = 55;
const VERSES_PER_CHAPTER: usize = 20;

const SYLLABLES: &[&str] = &[
    "ka", "ra", "ma", "ni", "sha", "tva", "dhi", "pra", "vi", "ja", "na", "su", "bha", "ta", "ya", "lo",
    "de", "gu", "ru", "sam", "ksha", "mu", "ha", "pa", "chi", "vra", "sya", "dra", "ga", "sva", "ve", "no",
];

/// Frequent content words shared by every theme.
const COMMON: &[&str] = &[
    "man", "great", "world", "life", "mind", "day", "king", "good", "way", "time", "heart", "men", "lord",
    "said", "also", "things", "word", "like", "know", "truly", "father", "son", "earth", "hand", "name",
    "indeed", "even", "thus", "therefore", "yet", "speak", "spoke", "came", "went", "saw", "people",
    "high", "place", "light", "among",
];

const ARCHAIC: &[&str] = &["thou", "thee", "thy", "hath", "doth", "art", "ye", "shalt"];

struct CorpusPlan {
    name: &'static str,
    themes: Vec<usize>,
    verses: usize,
}

fn theme_words(rng: &mut ChaCha8Rng, n_themes: usize, stop: &BTreeSet<String>) -> Vec<Vec<String>> {
    let mut seen: BTreeSet<String> = COMMON.iter().map(|w| w.to_string()).collect();
    seen.extend(ARCHAIC.iter().map(|w| w.to_string()));
    let mut themes = Vec::new();
    for _ in 0..n_themes {
        let mut words = Vec::new();
        while words.len() < WORDS_PER_THEME {
            let n = rng.random_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
            if w.len() >= 4 && !stop.contains(&w) && seen.insert(w.clone()) {
                words.push(w);
            }
        }
        themes.push(words);
    }
    themes
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0).powf(s))).expect("positive weights")
}

fn verse_text(
    rng: &mut ChaCha8Rng,
    theme: &[String],
    theme_dist: &WeightedIndex<f64>,
    common_dist: &WeightedIndex<f64>,
    stop: &[String],
    stop_dist: &WeightedIndex<f64>,
) -> String {
    let len = rng.random_range(50..=90);
    let mut toks: Vec<String> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.6 {
                theme[theme_dist.sample(rng)].clone()
            } else if u < 0.77 {
                COMMON[common_dist.sample(rng)].to_owned()
            } else if u < 0.8 {
                ARCHAIC.choose(rng).expect("non-empty").to_string()
            } else {
                stop[stop_dist.sample(rng)].clone()
            }
        })
        .collect();
    for i in 1..toks.len() - 1 {
        if rng.random::<f64>() < 0.06 {
            toks[i].push(',');
        }
    }
    let mut first = toks[0].chars();
    let head = first.next().expect("non-empty token").to_uppercase().chain(first).collect::<String>();
    toks[0] = head;
    format!("{}.", toks.join(" "))
}

fn write_corpus(
    rng: &mut ChaCha8Rng,
    plan: &CorpusPlan,
    themes: &[Vec<String>],
    stop: &[String],
) -> String {
    let theme_dist = zipf(WORDS_PER_THEME, 0.4);
    let common_dist = zipf(COMMON.len(), 1.0);
    let stop_dist = zipf(stop.len(), 1.0);
    let mut out = String::new();
    for i in 0..plan.verses {
        let (c, v) = (i / VERSES_PER_CHAPTER + 1, i % VERSES_PER_CHAPTER + 1);
        let t = plan.themes[rng.random_range(0..plan.themes.len())];
        let text = verse_text(rng, &themes[t], &theme_dist, &common_dist, stop, &stop_dist);
        out.push_str(&format!("{c}.{v} {text}\n\n"));
    }
    out
}

/// TF-IDF rows (documents) over `vocab`, L2-normalised.
fn tfidf(corpora: &[&Corpus], vocab: &[String]) -> DMatrix<f64> {
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let docs: Vec<_> = corpora.iter().flat_map(|c| c.documents.iter()).collect();
    let mut x = DMatrix::zeros(docs.len(), vocab.len());
    for (d, doc) in docs.iter().enumerate() {
        for tok in doc.tokens() {
            if let Some(&j) = index.get(tok) {
                x[(d, j)] += 1.0;
            }
        }
    }
    let n = docs.len() as f64;
    for j in 0..vocab.len() {
        let df = (0..docs.len()).filter(|&d| x[(d, j)] > 0.0).count() as f64;
        let idf = (n / df).ln() + 1.0;
        for d in 0..docs.len() {
            if x[(d, j)] > 0.0 {
                x[(d, j)] = (1.0 + f64::ln(x[(d, j)])) * idf;
            }
        }
    }
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    x
}

/// Top-`DIM` left singular vectors scaled by singular values (documents) and
/// the matching word loadings, via the eigendecomposition of `X Xᵀ`.
fn lsa(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let gram = x * x.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut u = DMatrix::zeros(x.nrows(), DIM);
    let mut sigma = vec![0.0; DIM];
    for (k, &c) in order.iter().take(DIM).enumerate() {
        let mut col = eig.eigenvectors.column(c).into_owned();
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        u.set_column(k, &col);
        sigma[k] = eig.eigenvalues[c].max(0.0).sqrt();
    }
    let mut docs = u.clone();
    for k in 0..DIM {
        docs.column_mut(k).scale_mut(sigma[k]);
    }
    // Xᵀ U = V Σ
    let words = x.transpose() * &u;
    (docs, words)
}

fn to_embeddings(ids: Vec<String>, m: &DMatrix<f64>) -> EmbeddingMatrix {
    let rows = (0..m.nrows())
        .map(|i| {
            let r: Vec<f64> = m.row(i).iter().copied().collect();
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.into_iter().map(|v| v / n).collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(ids, rows).expect("finite rows")
}

fn write_emb(path: &Path, m: &EmbeddingMatrix, target: &str) {
    write_embeddings(path, m).expect("write EMB1");
    let manifest = serde_json::json!({
        "model": MODEL_ID,
        "target": target,
        "count": m.len(),
        "dim": m.dim(),
        "seed": SEED,
    });
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".manifest.json");
    std::fs::write(sidecar, serde_json::to_string_pretty(&manifest).expect("json") + "\n").expect("write manifest");
}

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));
    let corpora_dir = out.join("corpora");
    let emb_dir = out.join("embeddings");
    std::fs::create_dir_all(&corpora_dir).expect("create corpora dir");
    std::fs::create_dir_all(&emb_dir).expect("create embeddings dir");

    let stopset = default_stopwords();
    let stop: Vec<String> = ["the", "and", "of", "to", "in", "is", "that", "he", "who", "with", "for", "by",
        "it", "as", "his", "not", "be", "from", "this", "all", "which", "are", "was", "they", "so", "on",
        "what", "when", "there", "them"]
        .iter()
        .map(|s| s.to_string())
        .filter(|s| stopset.contains(s))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    // Themes 0..6 are shared; 6..14 belong to the first corpus, 14..21 to the second.
    let themes = theme_words(&mut rng, 21, &stopset);
    let plans = [
        CorpusPlan {
            name: "dialogue",
            themes: (0..14).collect(),
            verses: 300,
        },
        CorpusPlan {
            name: "forest_teachings",
            themes: (0..6).chain(14..21).collect(),
            verses: 280,
        },
    ];

    let mut corpora = Vec::new();
    for plan in &plans {
        let text = write_corpus(&mut rng, plan, &themes, &stop);
        std::fs::write(corpora_dir.join(format!("{}.txt", plan.name)), &text).expect("write corpus");
        let opts = SegmentOptions {
            source: plan.name.to_owned(),
            ..SegmentOptions::default()
        };
        let docs = segment(&text, SegmentMode::VerseNumbered, &opts).expect("segment");
        corpora.push(build_corpus(docs, plan.name, &stopset).expect("corpus"));
    }

    let vocab: Vec<String> = corpora
        .iter()
        .flat_map(|c| c.vocabulary.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let refs: Vec<&Corpus> = corpora.iter().collect();
    let x = tfidf(&refs, &vocab);
    let (doc_vecs, word_vecs) = lsa(&x);

    let mut offset = 0;
    for c in &corpora {
        let n = c.documents.len();
        let ids = c.documents.iter().map(|d| d.id.clone()).collect();
        let m = to_embeddings(ids, &doc_vecs.rows(offset, n).into_owned());
        write_emb(&emb_dir.join(format!("{}.docs.emb", c.name)), &m, "documents");
        offset += n;
        println!("{}: {} documents", c.name, n);
    }
    let words = to_embeddings(vocab.clone(), &word_vecs);
    write_emb(&emb_dir.join("vocab.words.emb"), &words, "vocabulary");
    println!("vocabulary: {} words, dim {DIM}", vocab.len());
}
