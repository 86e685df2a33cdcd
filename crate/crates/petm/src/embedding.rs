//! Remote embeddings over HTTP and a binary sidecar cache of pool vectors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use petm_core::retrieval::{EmbeddingProvider, EmbeddingVector, RetrievalError, RetrievalIndex, Values};
use serde::Deserialize;
use serde_json::json;

use crate::http::{agent, backoff};

/// Speaks the common embeddings shape: `{"model", "input": [...]}` in,
/// `{"data": [{"embedding": [...]}, ...]}` out.
#[derive(Clone, Debug)]
pub struct RemoteEmbeddingProvider {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout: Duration,
}

impl RemoteEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEmbeddingProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var("PETM_LLM_API_KEY").ok(),
            retries: 3,
            backoff_ms: 500,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn fingerprint(&self) -> String {
        format!("remote/{}/{}", self.endpoint, self.model)
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let agent = agent(self.timeout);
        let body = json!({ "model": self.model, "input": texts });
        let mut last = String::new();
        let mut retry_after_ms = None;
        let mut attempts = 0;
        for attempt in 0..=self.retries {
            attempts = attempt + 1;
            if attempt > 0 {
                std::thread::sleep(backoff(self.backoff_ms, attempt, retry_after_ms));
            }
            let mut req = agent.post(&self.endpoint);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(&body) {
                Ok(mut resp) if resp.status().is_success() => {
                    let parsed: EmbeddingResponse = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| RetrievalError::ProviderUnavailable { message: e.to_string(), attempts: attempt + 1, retry_after_ms: None })?;
                    return Ok(parsed.data.into_iter().map(|d| EmbeddingVector::dense(d.embedding)).collect());
                }
                Ok(resp) => {
                    retry_after_ms = crate::http::retry_after_ms(&resp);
                    last = format!("HTTP {}", resp.status());
                    if !(resp.status().as_u16() == 429 || resp.status().is_server_error()) {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(RetrievalError::ProviderUnavailable { message: last, attempts, retry_after_ms })
    }
}

const MAGIC: &[u8; 8] = b"PETMVEC1";

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    write_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let len = read_u64(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Layout: magic, fingerprint, count, then per vector id, dim, degenerate
/// flag, layout byte, and either `dim` values or a count of (index, value)
/// pairs.
pub fn save_index(path: &Path, index: &RetrievalIndex) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        write_str(&mut w, index.fingerprint())?;
        write_u64(&mut w, index.len() as u64)?;
        for (id, v) in index.ids().iter().zip(index.vectors()) {
            write_str(&mut w, id)?;
            write_u64(&mut w, v.dim as u64)?;
            w.write_all(&[u8::from(v.degenerate)])?;
            match &v.values {
                Values::Dense(d) => {
                    w.write_all(&[0])?;
                    for x in d {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Values::Sparse(s) => {
                    w.write_all(&[1])?;
                    write_u64(&mut w, s.len() as u64)?;
                    for &(i, x) in s {
                        write_u64(&mut w, u64::from(i))?;
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

/// Loads a cached index, or `None` if the file is missing, unreadable, or
/// was written by a different provider configuration.
pub fn load_index(path: &Path, fingerprint: &str, ids: &[&str]) -> Option<RetrievalIndex> {
    let mut r = BufReader::new(File::open(path).ok()?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).ok()?;
    if &magic != MAGIC || read_str(&mut r).ok()? != fingerprint {
        return None;
    }
    let n = read_u64(&mut r).ok()? as usize;
    if n != ids.len() {
        return None;
    }
    let mut entries = Vec::with_capacity(n);
    for expected in ids {
        let id = read_str(&mut r).ok()?;
        if id != *expected {
            return None;
        }
        let dim = read_u64(&mut r).ok()? as usize;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags).ok()?;
        let read_f64 = |r: &mut BufReader<File>| -> Option<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).ok()?;
            Some(f64::from_le_bytes(b))
        };
        let mut v = if flags[1] == 0 {
            let mut dense = Vec::with_capacity(dim);
            for _ in 0..dim {
                dense.push(read_f64(&mut r)?);
            }
            EmbeddingVector::dense(dense)
        } else {
            let count = read_u64(&mut r).ok()? as usize;
            let mut sparse = Vec::with_capacity(count);
            for _ in 0..count {
                let i = u32::try_from(read_u64(&mut r).ok()?).ok()?;
                sparse.push((i, read_f64(&mut r)?));
            }
            EmbeddingVector::sparse(dim, sparse)
        };
        v.degenerate = flags[0] == 1;
        entries.push((id, v));
    }
    RetrievalIndex::from_vectors(fingerprint.to_string(), entries).ok()
}

/// Builds the index, reusing `cache` when it matches the provider and pool.
pub fn build_index_cached<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    pool: &[(&str, &str)],
    cache: Option<&Path>,
) -> Result<RetrievalIndex, RetrievalError> {
    let fingerprint = provider.fingerprint();
    let ids: Vec<&str> = pool.iter().map(|p| p.0).collect();
    if let Some(index) = cache.and_then(|c| load_index(c, &fingerprint, &ids)) {
        return Ok(index);
    }
    let index = RetrievalIndex::build(provider, pool)?;
    if let Some(c) = cache {
        // A cache that cannot be written only costs a rebuild next time.
        let _ = save_index(c, &index);
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use petm_core::retrieval::CharNgramProvider;

    #[test]
    fn cache_round_trip_and_fingerprint_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.vec");
        let pool = [("a", "environment variables"), ("b", "session cookie"), ("c", "")];
        let provider = CharNgramProvider::fit(&pool.iter().map(|p| p.1).collect::<Vec<_>>());
        let built = build_index_cached(&provider, &pool, Some(&path)).unwrap();
        let ids: Vec<&str> = pool.iter().map(|p| p.0).collect();
        let loaded = load_index(&path, &provider.fingerprint(), &ids).unwrap();
        assert_eq!(loaded.vectors(), built.vectors());
        assert!(loaded.vectors()[2].degenerate);
        assert!(load_index(&path, "other", &ids).is_none());
        assert!(load_index(&path, &provider.fingerprint(), &ids[..2]).is_none());
    }
}
