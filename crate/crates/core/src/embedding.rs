//! Text embeddings and phrase-bank similarity.
//!
//! The built-in [`HashEmbedder`] hashes character trigrams of padded tokens
//! into 256 signed buckets with FNV-1a, then L2-normalizes. It is fully
//! deterministic, so similarity scores are reproducible across platforms.
//! A dense encoder can be plugged in through [`EmbeddingProvider`], either
//! in-process or behind the [`RemoteEmbedder`] HTTP client.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const HASH_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("phrase bank `{0}` is empty")]
    EmptyBank(String),
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Dense vector; either all zeros or unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit norm; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.0 {
                *v /= norm;
            }
        }
        self
    }
}

impl std::ops::Neg for Embedding {
    type Output = Embedding;

    fn neg(self) -> Embedding {
        Embedding(self.0.into_iter().map(|v| -v).collect())
    }
}

/// Cosine similarity, 0 when either side is the zero vector.
///
/// Computed as `dot / sqrt(|a|^2 |b|^2)` so that identical inputs give
/// exactly 1.0.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn embed(&self, text: &str) -> Embedding;

    fn embed_batch(&self, texts: &[String]) -> Vec<Embedding> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub const PROVIDER_ID: &'static str = "hash-trigram-256";
}

/// Built-in embedding of `text`.
pub fn embed_hash(text: &str) -> Embedding {
    let mut acc = vec![0.0f64; HASH_DIM];
    let mut buf = [0u8; 12];
    for token in normalize_tokens(text) {
        let padded: Vec<char> = std::iter::once('#')
            .chain(token.chars())
            .chain(std::iter::once('#'))
            .collect();
        for tri in padded.windows(3) {
            let mut len = 0;
            for c in tri {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a64(&buf[..len]);
            let bucket = (h % HASH_DIM as u64) as usize;
            let sign = if (h >> 8) & 1 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
    }
    Embedding(acc).normalized()
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        Self::PROVIDER_ID
    }

    fn embed(&self, text: &str) -> Embedding {
        embed_hash(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankMatch {
    pub score: f64,
    pub best_entry: String,
    pub entry_index: usize,
}

/// Max cosine over the bank's entries. Ties keep the earliest entry.
pub fn bank_similarity(
    phrase: &str,
    bank_id: &str,
    entries: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<BankMatch, EmbeddingError> {
    let vectors = provider.embed_batch(entries);
    best_match(&provider.embed(phrase), bank_id, entries, &vectors)
}

pub(crate) fn best_match(
    phrase: &Embedding,
    bank_id: &str,
    entries: &[String],
    vectors: &[Embedding],
) -> Result<BankMatch, EmbeddingError> {
    let mut best: Option<BankMatch> = None;
    for (i, (entry, v)) in entries.iter().zip(vectors).enumerate() {
        let score = cosine(phrase, v)?;
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(BankMatch {
                score,
                best_entry: entry.clone(),
                entry_index: i,
            });
        }
    }
    best.ok_or_else(|| EmbeddingError::EmptyBank(bank_id.to_owned()))
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    provider_id: String,
}

/// Client for an external `POST /embed` service. Any transport or protocol
/// failure falls back to the configured local provider.
pub struct RemoteEmbedder {
    url: String,
    provider_id: String,
    client: reqwest::blocking::Client,
    fallback: Arc<dyn EmbeddingProvider>,
}

impl RemoteEmbedder {
    pub fn new(
        base_url: &str,
        provider_id: impl Into<String>,
        timeout: Duration,
        fallback: Arc<dyn EmbeddingProvider>,
    ) -> reqwest::Result<Self> {
        Ok(Self {
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            provider_id: provider_id.into(),
            client: reqwest::blocking::Client::builder().timeout(timeout).build()?,
            fallback,
        })
    }

    fn fetch(&self, texts: &[String]) -> Result<Vec<Embedding>, String> {
        let resp: EmbedResponse = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| e.to_string())?;
        if resp.vectors.len() != texts.len() || resp.vectors.iter().any(|v| v.len() != resp.dim) {
            return Err(format!("malformed reply from provider {}", resp.provider_id));
        }
        Ok(resp.vectors.into_iter().map(|v| Embedding(v).normalized()).collect())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn embed(&self, text: &str) -> Embedding {
        self.embed_batch(&[text.to_owned()]).remove(0)
    }

    fn embed_batch(&self, texts: &[String]) -> Vec<Embedding> {
        match self.fetch(texts) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(error = %e, "remote embedding failed, using fallback provider");
                self.fallback.embed_batch(texts)
            }
        }
    }
}
