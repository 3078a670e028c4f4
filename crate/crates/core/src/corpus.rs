//! Text cleaning, verse/paragraph segmentation, vocabulary and n-gram counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOPWORDS_EN: &str = include_str!("../assets/stopwords_en.txt");
const ARCHAIC_EN: &str = include_str!("../assets/archaic_en.tsv");

/// Characters removed outright during cleaning.
pub const STRIP_SET: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '{', '}', '\u{2014}', '\u{2013}',
    '-', '\u{2018}', '\u{2019}', '\u{201c}', '\u{201d}',
];

/// Default verse marker: `N.M` or `(N.M)` at the start of a line.
pub const DEFAULT_VERSE_PATTERN: &str = r"(?m)^[ \t]*\(?(\d+)\.(\d+)\)?[.:]?(?:[ \t]+|$)";

pub const DEFAULT_MAX_TOKENS: usize = 120;

static ESCAPE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\u[0-9a-fA-F]{4}|\\[nrt]").expect("static regex"));

static DEFAULT_CLEANER: LazyLock<Cleaner> = LazyLock::new(Cleaner::default);

/// Parses a line-oriented word list, skipping `#` comments and blank lines.
fn asset_lines(src: &str) -> impl Iterator<Item = &str> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn default_stopwords() -> BTreeSet<String> {
    asset_lines(STOPWORDS_EN).map(str::to_owned).collect()
}

pub fn parse_stopwords(src: &str) -> BTreeSet<String> {
    asset_lines(src).map(|w| w.to_lowercase()).collect()
}

/// Text cleaner with a whole-token replacement table for archaic words.
#[derive(Debug, Clone)]
pub struct Cleaner {
    replacements: HashMap<String, String>,
}

impl Default for Cleaner {
    fn default() -> Self {
        Cleaner::from_table(ARCHAIC_EN).expect("bundled archaic table is valid")
    }
}

impl Cleaner {
    /// Builds a cleaner from a tab-separated `archaic<TAB>modern` table.
    pub fn from_table(src: &str) -> Result<Self> {
        let mut replacements = HashMap::new();
        for line in asset_lines(src) {
            let mut parts = line.split('\t').map(str::trim).filter(|s| !s.is_empty());
            let (Some(from), Some(to), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::input(format!("bad replacement line: {line:?}")));
            };
            replacements.insert(from.to_lowercase(), to.to_lowercase());
        }
        Cleaner::new(replacements)
    }

    pub fn new(replacements: HashMap<String, String>) -> Result<Self> {
        // A replacement value that is itself a key would make cleaning non-idempotent.
        for (from, to) in &replacements {
            if replacements.contains_key(to) {
                return Err(Error::input(format!(
                    "replacement {from:?} -> {to:?} chains into another replacement"
                )));
            }
            let clean_to = strip_and_fold(to);
            if clean_to != *to || to.is_empty() || to.contains(' ') {
                return Err(Error::input(format!(
                    "replacement value {to:?} is not a single clean token"
                )));
            }
        }
        Ok(Cleaner { replacements })
    }

    pub fn clean(&self, raw: &str) -> String {
        let mut text = raw.to_owned();
        // Removing one escape can expose another, so loop to a fixpoint.
        loop {
            let next = ESCAPE_RE
                .replace_all(&text, |caps: &regex::Captures<'_>| {
                    if caps[0].starts_with("\\u") {
                        ""
                    } else {
                        " "
                    }
                })
                .into_owned();
            if next == text {
                break;
            }
            text = next;
        }
        let text: String = text
            .chars()
            .filter_map(|c| match c {
                '\\' | '\u{fffd}' => None,
                c if c.is_control() => Some(' '),
                c => Some(c),
            })
            .collect();
        let folded = strip_and_fold(&text);
        let mut out = String::with_capacity(folded.len());
        for tok in folded.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(self.replacements.get(tok).map_or(tok, String::as_str));
        }
        out
    }
}

fn strip_and_fold(text: &str) -> String {
    text.chars()
        .filter(|c| !STRIP_SET.contains(c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Cleans text with the bundled archaic-word table.
pub fn clean_text(raw: &str) -> String {
    DEFAULT_CLEANER.clean(raw)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chapter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verse: Option<String>,
    pub token_count: usize,
}

impl Document {
    /// Creates a document from already cleaned text.
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = text.split_whitespace().count();
        Document {
            id: id.into(),
            text,
            source: source.into(),
            chapter: None,
            verse: None,
            token_count,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMode {
    VerseNumbered,
    Paragraph,
}

#[derive(Debug, Clone)]
pub struct SegmentOptions {
    pub verse_pattern: String,
    pub max_tokens: usize,
    pub source: String,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            verse_pattern: DEFAULT_VERSE_PATTERN.to_owned(),
            max_tokens: DEFAULT_MAX_TOKENS,
            source: String::new(),
        }
    }
}

/// Splits raw text into documents.
///
/// In verse mode each marker starts a document holding the first paragraph
/// after it; later paragraphs up to the next marker are commentary and are
/// chunked like paragraph-mode text. Text before the first marker is treated
/// the same way.
pub fn segment(raw: &str, mode: SegmentMode, opts: &SegmentOptions) -> Result<Vec<Document>> {
    if opts.max_tokens == 0 {
        return Err(Error::param("max_tokens must be positive"));
    }
    let raw = raw.replace("\r\n", "\n");
    let mut docs = Vec::new();
    match mode {
        SegmentMode::Paragraph => {
            push_paragraphs(&raw, "p", opts, &mut docs);
        }
        SegmentMode::VerseNumbered => {
            let re = Regex::new(&opts.verse_pattern)
                .map_err(|e| Error::param(format!("bad verse pattern: {e}")))?;
            let markers: Vec<_> = re.captures_iter(&raw).collect();
            if markers.is_empty() {
                return Err(Error::input(format!(
                    "no verse markers found with pattern {:?}",
                    opts.verse_pattern
                )));
            }
            let first = markers[0].get(0).expect("group 0").start();
            push_paragraphs(&raw[..first], "intro", opts, &mut docs);
            for (i, caps) in markers.iter().enumerate() {
                let whole = caps.get(0).expect("group 0");
                let end = markers
                    .get(i + 1)
                    .map_or(raw.len(), |next| next.get(0).expect("group 0").start());
                let block = &raw[whole.end()..end];
                let chapter = caps.get(1).map(|m| m.as_str().to_owned());
                let verse = caps.get(2).map(|m| m.as_str().to_owned());
                let label = match (&chapter, &verse) {
                    (Some(c), Some(v)) => format!("{c}.{v}"),
                    _ => format!("v{i}"),
                };
                let mut paras = split_paragraphs(block).into_iter();
                if let Some(body) = paras.next() {
                    let text = clean_text(body);
                    if !text.is_empty() {
                        let mut doc = Document::new(label.clone(), text, opts.source.clone());
                        doc.chapter = chapter;
                        doc.verse = verse;
                        docs.push(doc);
                    }
                }
                let rest: Vec<&str> = paras.collect();
                for (k, para) in rest.iter().enumerate() {
                    push_chunks(para, &format!("{label}/c{k}"), opts, &mut docs);
                }
            }
        }
    }
    dedupe_ids(&mut docs);
    Ok(docs)
}

fn split_paragraphs(text: &str) -> Vec<&str> {
    static BLANK: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\n[ \t]*\n").expect("static regex"));
    BLANK
        .split(text)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect()
}

fn push_paragraphs(text: &str, prefix: &str, opts: &SegmentOptions, docs: &mut Vec<Document>) {
    for (i, para) in split_paragraphs(text).into_iter().enumerate() {
        push_chunks(para, &format!("{prefix}{i}"), opts, docs);
    }
}

/// Pushes `para` as one document, or as several sentence-aligned chunks when it
/// exceeds `opts.max_tokens`.
fn push_chunks(para: &str, id: &str, opts: &SegmentOptions, docs: &mut Vec<Document>) {
    let chunks = chunk_paragraph(para, opts.max_tokens);
    let single = chunks.len() == 1;
    for (k, chunk) in chunks.into_iter().enumerate() {
        let id = if single {
            id.to_owned()
        } else {
            format!("{id}.{k}")
        };
        docs.push(Document::new(id, chunk, opts.source.clone()));
    }
}

/// Cleans a paragraph and packs its sentences greedily into chunks of at most
/// `max_tokens` cleaned tokens. Oversized sentences are hard-split.
fn chunk_paragraph(para: &str, max_tokens: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for sentence in split_sentences(para) {
        let toks: Vec<String> = clean_text(sentence)
            .split_whitespace()
            .map(str::to_owned)
            .collect();
        if toks.is_empty() {
            continue;
        }
        if !current.is_empty() && current.len() + toks.len() > max_tokens {
            chunks.push(current.join(" "));
            current.clear();
        }
        for tok in toks {
            if current.len() == max_tokens {
                chunks.push(current.join(" "));
                current.clear();
            }
            current.push(tok);
        }
    }
    if !current.is_empty() {
        chunks.push(current.join(" "));
    }
    chunks
}

/// Splits after `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets) when whitespace follows.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, q)) = chars.peek() {
                if matches!(q, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                    end = j + q.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
                out.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn dedupe_ids(docs: &mut [Document]) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for doc in docs.iter_mut() {
        let n = seen.entry(doc.id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            doc.id = format!("{}#{}", doc.id, *n - 1);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub name: String,
    pub documents: usize,
    pub words: usize,
    pub avg_words: f64,
    pub verses: usize,
}

/// An ordered document collection with a stopword-filtered vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<Document>,
    /// Sorted unique non-stopword tokens; a token's id is its index.
    pub vocabulary: Vec<String>,
    pub stats: CorpusStats,
    stopwords: BTreeSet<String>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Counts of each vocabulary word over the whole corpus, indexed by word id.
    pub fn word_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocabulary.len()];
        for doc in &self.documents {
            for tok in doc.tokens() {
                if let Some(id) = self.word_id(tok) {
                    counts[id] += 1;
                }
            }
        }
        counts
    }

    /// Bag of words per document over the vocabulary, sorted by word id.
    pub fn bags_of_words(&self) -> Vec<Vec<(usize, u32)>> {
        self.documents
            .iter()
            .map(|doc| {
                let mut bag: BTreeMap<usize, u32> = BTreeMap::new();
                for tok in doc.tokens() {
                    if let Some(id) = self.word_id(tok) {
                        *bag.entry(id).or_insert(0) += 1;
                    }
                }
                bag.into_iter().collect()
            })
            .collect()
    }
}

pub fn build_corpus(
    docs: Vec<Document>,
    name: &str,
    stopwords: &BTreeSet<String>,
) -> Result<Corpus> {
    if docs.is_empty() {
        return Err(Error::input(format!("corpus {name:?} has no documents")));
    }
    let mut vocab = BTreeSet::new();
    let mut words = 0usize;
    for doc in &docs {
        for tok in doc.tokens() {
            words += 1;
            if !stopwords.contains(tok) {
                vocab.insert(tok);
            }
        }
    }
    let vocabulary: Vec<String> = vocab.into_iter().map(str::to_owned).collect();
    let index = vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let stats = CorpusStats {
        name: name.to_owned(),
        documents: docs.len(),
        words,
        avg_words: words as f64 / docs.len() as f64,
        verses: docs.iter().filter(|d| d.verse.is_some()).count(),
    };
    Ok(Corpus {
        name: name.to_owned(),
        documents: docs,
        vocabulary,
        stats,
        stopwords: stopwords.clone(),
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramTable {
    pub n: usize,
    pub entries: Vec<(Vec<String>, usize)>,
}

/// Top `top_k` n-grams, counted within documents only. With `drop_stopwords`
/// stopwords are removed before forming n-grams.
pub fn ngrams(corpus: &Corpus, n: usize, top_k: usize, drop_stopwords: bool) -> Result<NgramTable> {
    if !(1..=3).contains(&n) {
        return Err(Error::param(format!("n-gram order must be 1, 2 or 3, got {n}")));
    }
    let mut counts: HashMap<Vec<&str>, usize> = HashMap::new();
    for doc in &corpus.documents {
        let toks: Vec<&str> = doc
            .tokens()
            .filter(|t| !drop_stopwords || !corpus.is_stopword(t))
            .collect();
        for gram in toks.windows(n) {
            *counts.entry(gram.to_vec()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(Vec<String>, usize)> = counts
        .into_iter()
        .map(|(g, c)| (g.into_iter().map(str::to_owned).collect(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_k);
    Ok(NgramTable { n, entries })
}

/// Writes one JSON document per line.
pub fn write_documents_jsonl(docs: &[Document]) -> Result<String> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    chapter: Option<String>,
    #[serde(default)]
    verse: Option<String>,
}

/// Reads `{id, text, chapter?, verse?}` lines. Text is cleaned on load.
pub fn read_documents_jsonl(src: &str, default_source: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| Error::input(format!("corpus line {}: {e}", lineno + 1)))?;
        let mut doc = Document::new(
            rec.id,
            clean_text(&rec.text),
            rec.source.unwrap_or_else(|| default_source.to_owned()),
        );
        doc.chapter = rec.chapter;
        doc.verse = rec.verse;
        docs.push(doc);
    }
    Ok(docs)
}
