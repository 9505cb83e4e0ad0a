//! Embedder contract and the two bundled implementations.
//!
//! An embedder maps text to a fixed-dimension real vector, deterministically
//! per instance. The engine never trains or fine-tunes one; production users
//! point the remote adapter at an embedding service, offline tests use the
//! hashing embedder.

use serde::Deserialize;

use crate::error::RetrieverError;

/// Deterministic text → vector map with a constant dimension.
///
/// Implementations must be safe to call concurrently.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrieverError>;

    fn dimension(&self) -> usize;

    /// Batch form; the default maps [`Embedder::embed`] over the slice.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrieverError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Cosine similarity with zero-norm pairs defined as 0 rather than an error.
///
/// Bitwise-equal non-zero vectors score exactly 1.0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if a == b {
        return if norm_sq(a) == 0.0 { 0.0 } else { 1.0 };
    }
    let (na, nb) = (norm_sq(a).sqrt(), norm_sq(b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Bag-of-words hashing embedder for offline runs.
///
/// Each lowercase alphanumeric token is hashed (FNV-1a, mixed with a fixed
/// seed) into one of `dimension` buckets, so cosine similarity reflects token
/// overlap. Not a production embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedder dimension must be positive");
        Self { dimension, seed }
    }

    fn bucket(&self, token: &str) -> usize {
        // FNV-1a, fixed across platforms and releases.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (h % self.dimension as u64) as usize
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrieverError> {
        let mut v = vec![0.0; self.dimension];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            v[self.bucket(&token.to_lowercase())] += 1.0;
        }
        Ok(v)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedder backed by an HTTP service.
///
/// POSTs `{"texts": [...]}` to the endpoint and expects
/// `{"vectors": [[...], ...]}` back, one vector per input text.
pub struct RemoteEmbedder {
    endpoint: String,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        dimension: usize,
        timeout: std::time::Duration,
    ) -> Result<Self, RetrieverError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrieverError::Embedder(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            dimension,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrieverError> {
        Ok(self.embed_batch(&[text.to_owned()])?.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrieverError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = serde_json::json!({ "texts": texts });
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| RetrieverError::Embedder(e.to_string()))?
            .error_for_status()
            .map_err(|e| RetrieverError::Embedder(e.to_string()))?;
        let parsed: EmbedResponse = resp
            .json()
            .map_err(|e| RetrieverError::Embedder(e.to_string()))?;
        if parsed.vectors.len() != texts.len() {
            return Err(RetrieverError::Embedder(format!(
                "expected {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        for v in &parsed.vectors {
            if v.len() != self.dimension {
                return Err(RetrieverError::Embedder(format!(
                    "vector dimension {} does not match configured {}",
                    v.len(),
                    self.dimension
                )));
            }
        }
        Ok(parsed.vectors)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::new(64, 7);
        assert_eq!(e.embed("Pony Ma founded Tencent").unwrap(), e.embed("Pony Ma founded Tencent").unwrap());
    }

    #[test]
    fn hash_embedder_reflects_token_overlap() {
        let e = HashEmbedder::new(256, 7);
        let q = e.embed("tencent founder").unwrap();
        let close = e.embed("the tencent founder pony ma").unwrap();
        let far = e.embed("unrelated text about weather").unwrap();
        assert!(cosine(&q, &close) > cosine(&q, &far));
    }

    #[test]
    fn cosine_of_identical_vector_is_one() {
        let e = HashEmbedder::new(32, 0);
        let v = e.embed("same text").unwrap();
        assert_eq!(cosine(&v, &v), 1.0);
    }

    #[test]
    fn cosine_zero_norm_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }
}
