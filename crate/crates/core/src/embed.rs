//! Embedding matrices, the EMB1 interchange format and embedding providers.
//!
//! EMB1 layout (little-endian):
//!
//! ```text
//! "EMB1" | u32 count | u32 dim | count × ( u16 id_len | id bytes (UTF-8) | dim × f32 )
//! ```
//!
//! Vectors are stored as `f32` and widened to `f64` on load.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const DEFAULT_MIN_WORD_COUNT: usize = 3;
const NORM_TOLERANCE: f64 = 1e-6;

/// Row-per-item dense vectors bound to opaque item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    item_ids: Vec<String>,
    rows: Array2<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Validates and wraps `rows`. Rejects NaN/Inf entries, all-zero rows and
    /// id/row count mismatches.
    pub fn new(item_ids: Vec<String>, rows: Array2<f64>) -> Result<Self> {
        if item_ids.len() != rows.nrows() {
            return Err(Error::Format(format!(
                "{} ids for {} rows",
                item_ids.len(),
                rows.nrows()
            )));
        }
        if rows.ncols() == 0 {
            return Err(Error::Format("dim must be positive".into()));
        }
        for (i, row) in rows.outer_iter().enumerate() {
            validate_row(i, &item_ids[i], row)?;
        }
        let normalized = rows
            .outer_iter()
            .all(|r| (l2_norm(r) - 1.0).abs() <= NORM_TOLERANCE);
        Ok(EmbeddingMatrix {
            item_ids,
            rows,
            normalized,
        })
    }

    pub fn from_rows(item_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Format(format!(
                    "row {i}: dim {} differs from {dim}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        let rows = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::Format(e.to_string()))?;
        EmbeddingMatrix::new(item_ids, rows)
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|x| x == id)
    }

    /// Map from item id to row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Rows selected by position, in the given order.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let ids = positions.iter().map(|&p| self.item_ids[p].clone()).collect();
        let rows = self.rows.select(Axis(0), positions);
        EmbeddingMatrix::new(ids, rows)
    }

    /// Stacks two matrices of equal dim (ids must not collide).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Format(format!(
                "cannot stack dim {} with dim {}",
                self.dim(),
                other.dim()
            )));
        }
        let ids = self
            .item_ids
            .iter()
            .chain(&other.item_ids)
            .cloned()
            .collect();
        let rows = ndarray::concatenate(Axis(0), &[self.rows.view(), other.rows.view()])
            .map_err(|e| Error::Format(e.to_string()))?;
        EmbeddingMatrix::new(ids, rows)
    }
}

fn validate_row(i: usize, id: &str, row: ArrayView1<'_, f64>) -> Result<()> {
    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "row {i} ({id:?}): non-finite value at column {j}"
        )));
    }
    if row.iter().all(|&v| v == 0.0) {
        return Err(Error::Format(format!("row {i} ({id:?}): all-zero vector")));
    }
    Ok(())
}

pub(crate) fn l2_norm(row: ArrayView1<'_, f64>) -> f64 {
    row.dot(&row).sqrt()
}

/// Scales every row to unit L2 norm.
pub fn normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut rows = m.rows.clone();
    for (i, mut row) in rows.outer_iter_mut().enumerate() {
        let norm = l2_norm(row.view());
        if norm == 0.0 {
            return Err(Error::input(format!(
                "cannot normalize zero row {:?}",
                m.item_ids[i]
            )));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(EmbeddingMatrix {
        item_ids: m.item_ids.clone(),
        rows,
        normalized: true,
    })
}

pub fn encode_emb1(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let count = u32::try_from(m.len()).map_err(|_| Error::Format("too many rows".into()))?;
    let dim = u32::try_from(m.dim()).map_err(|_| Error::Format("dim too large".into()))?;
    let mut out = Vec::with_capacity(12 + m.len() * (2 + 16 + 4 * m.dim()));
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (id, row) in m.item_ids.iter().zip(m.rows.outer_iter()) {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Format(format!("id too long: {} bytes", id.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != EMB1_MAGIC {
        return Err(Error::Format("magic mismatch: expected EMB1".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::Format("dim must be positive".into()));
    }
    // Each row needs at least 2 + 4*dim bytes; reject impossible headers
    // before allocating for them.
    let min_row = 4usize.saturating_mul(dim).saturating_add(2);
    if count.saturating_mul(min_row) > bytes.len() - r.pos {
        return Err(Error::Format(format!(
            "truncated payload: header claims {count} rows of dim {dim}, file has {} bytes",
            bytes.len()
        )));
    }
    let mut ids = Vec::with_capacity(count);
    let mut flat = Vec::with_capacity(count * dim);
    for i in 0..count {
        let len = r.u16()? as usize;
        let id = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format(format!("row {i}: id is not UTF-8")))?;
        ids.push(id.to_owned());
        for chunk in r.take(4 * dim)?.chunks_exact(4) {
            flat.push(f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} rows",
            bytes.len() - r.pos
        )));
    }
    let rows =
        Array2::from_shape_vec((count, dim), flat).map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingMatrix::new(ids, rows)
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    vector: Vec<f64>,
}

pub fn decode_jsonl(src: &str) -> Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in src.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row: JsonlRow =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("row {i}: {e}")))?;
        ids.push(row.id);
        rows.push(row.vector);
    }
    if rows.is_empty() {
        return Err(Error::Format("no rows".into()));
    }
    EmbeddingMatrix::from_rows(ids, rows)
}

/// Reads an EMB1 file, or JSONL `{id, vector}` lines when the file starts with `{`.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.first() == Some(&b'{') {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Format("JSONL embeddings are not UTF-8".into()))?;
        decode_jsonl(text)
    } else {
        decode_emb1(&bytes)
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_emb1(m)?).map_err(|e| Error::io(path, e))
}

/// Supplies vectors for arbitrary strings.
pub trait EmbeddingProvider {
    /// Identifier recorded in model provenance.
    fn id(&self) -> &str;

    /// One vector per input, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Looks strings up in a precomputed matrix, typically a vocabulary EMB1 file.
#[derive(Debug, Clone)]
pub struct TableProvider {
    id: String,
    table: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl TableProvider {
    pub fn new(id: impl Into<String>, table: EmbeddingMatrix) -> Self {
        let index = table
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        TableProvider {
            id: id.into(),
            table,
            index,
        }
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index.contains_key(text)
    }
}

impl EmbeddingProvider for TableProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .map(|&i| self.table.row(i).to_vec())
                    .ok_or_else(|| Error::Provider(format!("no vector for {t:?} in {}", self.id)))
            })
            .collect()
    }
}

/// Remote provider: `POST {"texts": [...]}` answered by `{"vectors": [[...]]}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    id: String,
    url: String,
    batch_size: usize,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct HttpResponse {
    vectors: Vec<Vec<f64>>,
}

impl HttpProvider {
    pub fn new(id: impl Into<String>, url: impl Into<String>) -> Self {
        HttpProvider {
            id: id.into(),
            url: url.into(),
            batch_size: 256,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }
}

impl EmbeddingProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let resp: HttpResponse = self
                .client
                .post(&self.url)
                .json(&HttpRequest { texts: batch })
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| Error::Provider(format!("{}: {e}", self.url)))?
                .json()
                .map_err(|e| Error::Provider(format!("{}: bad response: {e}", self.url)))?;
            if resp.vectors.len() != batch.len() {
                return Err(Error::Provider(format!(
                    "{}: sent {} texts, got {} vectors",
                    self.url,
                    batch.len(),
                    resp.vectors.len()
                )));
            }
            out.extend(resp.vectors);
        }
        Ok(out)
    }
}

/// Documents and vocabulary words in one vector space.
#[derive(Debug, Clone)]
pub struct JointEmbedding {
    pub docs: EmbeddingMatrix,
    pub words: EmbeddingMatrix,
}

impl JointEmbedding {
    pub fn new(docs: EmbeddingMatrix, words: EmbeddingMatrix) -> Result<Self> {
        if docs.dim() != words.dim() {
            return Err(Error::input(format!(
                "document dim {} differs from word dim {}",
                docs.dim(),
                words.dim()
            )));
        }
        Ok(JointEmbedding { docs, words })
    }
}

/// Non-stopword vocabulary tokens seen at least `min_word_count` times, in
/// vocabulary order.
pub fn candidate_words(corpus: &Corpus, min_word_count: usize) -> Vec<String> {
    corpus
        .word_counts()
        .into_iter()
        .zip(&corpus.vocabulary)
        .filter(|(c, _)| *c >= min_word_count)
        .map(|(_, w)| w.clone())
        .collect()
}

/// Embeds every candidate vocabulary word through `provider`, alongside the
/// given document vectors.
pub fn embed_vocabulary(
    corpus: &Corpus,
    docs_emb: &EmbeddingMatrix,
    provider: &dyn EmbeddingProvider,
    min_word_count: usize,
) -> Result<JointEmbedding> {
    let words = candidate_words(corpus, min_word_count);
    if words.is_empty() {
        return Err(Error::input(format!(
            "no vocabulary word occurs at least {min_word_count} times"
        )));
    }
    embed_words(words, docs_emb, provider)
}

/// Embeds an explicit word list through `provider`.
pub fn embed_words(
    words: Vec<String>,
    docs_emb: &EmbeddingMatrix,
    provider: &dyn EmbeddingProvider,
) -> Result<JointEmbedding> {
    if words.is_empty() {
        return Err(Error::input("no words to embed"));
    }
    let vectors = provider.embed(&words)?;
    if vectors.len() != words.len() {
        return Err(Error::Provider(format!(
            "{} returned {} vectors for {} words",
            provider.id(),
            vectors.len(),
            words.len()
        )));
    }
    if let Some((i, v)) = vectors
        .iter()
        .enumerate()
        .find(|(_, v)| v.len() != docs_emb.dim())
    {
        return Err(Error::Provider(format!(
            "{} returned dim {} for {:?}, documents have dim {}",
            provider.id(),
            v.len(),
            words[i],
            docs_emb.dim()
        )));
    }
    let words = EmbeddingMatrix::from_rows(words, vectors)?;
    JointEmbedding::new(docs_emb.clone(), words)
}
