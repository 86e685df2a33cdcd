//! Source-side similarity search over the in-context example pool.
//!
//! Search is exact: every pool vector is scored against the query and the
//! results are ordered by descending cosine, ties by ascending record id.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Number of hash buckets of the built-in character n-gram vectorizer.
pub const NGRAM_HASH_DIM: usize = 1 << 18;
const NGRAM_ORDERS: core::ops::RangeInclusive<usize> = 3..=5;

pub const DEFAULT_SHOTS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedding provider unavailable after {attempts} attempt(s): {message}")]
    ProviderUnavailable { message: String, attempts: u32, retry_after_ms: Option<u64> },
    #[error("embedding dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("provider returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("nothing to embed")]
    EmptyInput,
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index was built with `{index}` but query uses `{query}`")]
    FingerprintMismatch { index: String, query: String },
    #[error("duplicate pool id `{0}`")]
    DuplicateId(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Values {
    Dense(Vec<f64>),
    /// `(index, value)` pairs sorted by index, no zeros.
    Sparse(Vec<(u32, f64)>),
}

/// A sentence embedding. Vectors produced by [`embed`] are L2-normalized
/// unless `degenerate` (all-zero input).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub dim: usize,
    pub values: Values,
    pub degenerate: bool,
}

impl EmbeddingVector {
    pub fn dense(values: Vec<f64>) -> Self {
        EmbeddingVector { dim: values.len(), values: Values::Dense(values), degenerate: false }
    }

    pub fn sparse(dim: usize, mut entries: Vec<(u32, f64)>) -> Self {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        EmbeddingVector { dim, values: Values::Sparse(entries), degenerate: false }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = match &self.values {
            Values::Dense(v) => v.iter().map(|x| x * x).sum(),
            Values::Sparse(v) => v.iter().map(|(_, x)| x * x).sum(),
        };
        libm::sqrt(sq)
    }

    /// Scales to unit length, or flags the vector as degenerate if it is zero.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            self.degenerate = true;
            return self;
        }
        match &mut self.values {
            Values::Dense(v) => v.iter_mut().for_each(|x| *x /= norm),
            Values::Sparse(v) => v.iter_mut().for_each(|(_, x)| *x /= norm),
        }
        self.degenerate = false;
        self
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        match (&self.values, &other.values) {
            (Values::Dense(a), Values::Dense(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (Values::Sparse(a), Values::Sparse(b)) => {
                let (mut i, mut j, mut sum) = (0, 0, 0.0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        Ordering::Less => i += 1,
                        Ordering::Greater => j += 1,
                        Ordering::Equal => {
                            sum += a[i].1 * b[j].1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                sum
            }
            (Values::Sparse(s), Values::Dense(d)) | (Values::Dense(d), Values::Sparse(s)) => {
                s.iter().filter_map(|&(i, x)| d.get(i as usize).map(|y| x * y)).sum()
            }
        }
    }

    /// Dense copy of the values.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.values {
            Values::Dense(v) => v.clone(),
            Values::Sparse(v) => {
                let mut out = alloc::vec![0.0; self.dim];
                for &(i, x) in v {
                    out[i as usize] = x;
                }
                out
            }
        }
    }
}

/// Something that turns sentences into vectors.
pub trait EmbeddingProvider {
    /// Identifies the provider and its configuration; indexes refuse
    /// queries from a different fingerprint.
    fn fingerprint(&self) -> String;

    /// Raw vectors, one per text; normalization is applied by [`embed`].
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError>;
}

/// One unit-norm vector per text, all of the same dimension.
pub fn embed<P: EmbeddingProvider + ?Sized>(provider: &P, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    if texts.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(RetrievalError::CountMismatch { expected: texts.len(), found: raw.len() });
    }
    let dim = raw[0].dim;
    let mut out = Vec::with_capacity(raw.len());
    for v in raw {
        let found = match &v.values {
            Values::Dense(d) => d.len(),
            Values::Sparse(_) => v.dim,
        };
        if v.dim != dim || found != dim {
            return Err(RetrievalError::DimensionMismatch { expected: dim, found });
        }
        out.push(v.normalized());
    }
    Ok(out)
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn ngram_buckets(text: &str) -> BTreeMap<u32, f64> {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = {
        let mut out = Vec::with_capacity(lowered.len());
        for word in lowered.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(word.chars());
        }
        out
    };
    let mut counts = BTreeMap::new();
    let mut buf = String::new();
    for n in NGRAM_ORDERS {
        for gram in chars.windows(n) {
            buf.clear();
            buf.extend(gram.iter());
            let bucket = (fnv1a(buf.as_bytes()) % NGRAM_HASH_DIM as u64) as u32;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Hashed character 3-5-gram vectorizer with optional TF-IDF weighting.
///
/// Unfitted, every bucket has weight 1 (plain term frequency). After
/// [`CharNgramProvider::fit`] buckets are weighted by the smoothed inverse
/// document frequency `ln((1 + N) / (1 + df)) + 1` over the fitted texts.
#[derive(Clone, Debug, Default)]
pub struct CharNgramProvider {
    doc_freq: BTreeMap<u32, u32>,
    docs: u32,
}

impl CharNgramProvider {
    pub fn new() -> Self {
        CharNgramProvider::default()
    }

    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut doc_freq = BTreeMap::new();
        for t in texts {
            for bucket in ngram_buckets(t.as_ref()).into_keys() {
                *doc_freq.entry(bucket).or_insert(0) += 1;
            }
        }
        CharNgramProvider { doc_freq, docs: texts.len() as u32 }
    }

    fn idf(&self, bucket: u32) -> f64 {
        if self.docs == 0 {
            return 1.0;
        }
        let df = self.doc_freq.get(&bucket).copied().unwrap_or(0);
        libm::log((1.0 + f64::from(self.docs)) / (1.0 + f64::from(df))) + 1.0
    }

    pub fn vectorize(&self, text: &str) -> EmbeddingVector {
        let entries = ngram_buckets(text).into_iter().map(|(b, tf)| (b, tf * self.idf(b))).collect();
        EmbeddingVector::sparse(NGRAM_HASH_DIM, entries)
    }
}

impl EmbeddingProvider for CharNgramProvider {
    fn fingerprint(&self) -> String {
        let mut digest: u64 = 0;
        for (&bucket, &df) in &self.doc_freq {
            let mut bytes = [0u8; 8];
            bytes[..4].copy_from_slice(&bucket.to_le_bytes());
            bytes[4..].copy_from_slice(&df.to_le_bytes());
            digest = fnv1a(&bytes) ^ digest.rotate_left(5);
        }
        format!("char-ngram-v1/dim={NGRAM_HASH_DIM}/n=3-5/docs={}/df={digest:016x}", self.docs)
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        Ok(texts.iter().map(|t| self.vectorize(t)).collect())
    }
}

/// Unit-norm term-frequency vector of `text`; the empty string (or any text
/// shorter than three characters) gives a degenerate zero vector.
pub fn char_ngram_vector(text: &str) -> EmbeddingVector {
    CharNgramProvider::new().vectorize(text).normalized()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub score: f64,
}

/// Immutable exact-search index over pool sources.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    fingerprint: String,
}

impl RetrievalIndex {
    /// Embeds every `(id, source)` of the pool.
    pub fn build<P: EmbeddingProvider + ?Sized>(provider: &P, pool: &[(&str, &str)]) -> Result<Self, RetrievalError> {
        let mut seen = alloc::collections::BTreeSet::new();
        for (id, _) in pool {
            if !seen.insert(*id) {
                return Err(RetrievalError::DuplicateId(String::from(*id)));
            }
        }
        let vectors = if pool.is_empty() {
            Vec::new()
        } else {
            let texts: Vec<&str> = pool.iter().map(|(_, s)| *s).collect();
            embed(provider, &texts)?
        };
        Ok(RetrievalIndex {
            ids: pool.iter().map(|(id, _)| String::from(*id)).collect(),
            vectors,
            fingerprint: provider.fingerprint(),
        })
    }

    /// Index over precomputed (already normalized) vectors.
    pub fn from_vectors(fingerprint: String, entries: Vec<(String, EmbeddingVector)>) -> Result<Self, RetrievalError> {
        let dim = entries.first().map(|(_, v)| v.dim);
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if Some(v.dim) != dim {
                return Err(RetrievalError::DimensionMismatch { expected: dim.unwrap_or(0), found: v.dim });
            }
            ids.push(id);
            vectors.push(v);
        }
        Ok(RetrievalIndex { ids, vectors, fingerprint })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    /// The `min(k, eligible pool size)` most similar pool records; the pool
    /// record whose id equals `exclude_id` is never returned.
    pub fn top_k(&self, query: &EmbeddingVector, exclude_id: Option<&str>, k: usize) -> Result<Vec<ScoredRecord>, RetrievalError> {
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if query.dim != self.vectors[0].dim {
            return Err(RetrievalError::DimensionMismatch { expected: self.vectors[0].dim, found: query.dim });
        }
        let mut scored: Vec<ScoredRecord> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .filter(|(id, _)| Some(id.as_str()) != exclude_id)
            .map(|(id, v)| ScoredRecord { id: id.clone(), score: query.dot(v).clamp(-1.0, 1.0) })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Embeds `text` with `provider` and searches; the provider must be the
    /// one the index was built with.
    pub fn query<P: EmbeddingProvider + ?Sized>(
        &self,
        provider: &P,
        text: &str,
        exclude_id: Option<&str>,
        k: usize,
    ) -> Result<Vec<ScoredRecord>, RetrievalError> {
        let fingerprint = provider.fingerprint();
        if fingerprint != self.fingerprint {
            return Err(RetrievalError::FingerprintMismatch { index: self.fingerprint.clone(), query: fingerprint });
        }
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query = embed(provider, &[text])?.remove(0);
        self.top_k(&query, exclude_id, k)
    }
}
