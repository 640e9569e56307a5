//! Text encoders and vector similarity.
//!
//! Two providers sit behind [`TextEncoder`]: a remote HTTP embeddings
//! service and an offline feature-hashing encoder that is a pure function
//! of the input text. Every vector an encoder returns is L2-normalized.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fnv1a64;
use crate::topics::tokenize;
use crate::transport::{HttpTransport, TransportError, UreqTransport};

/// Tolerance on the unit-norm invariant.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("text is empty")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("embedding provider returned HTTP {0}")]
    HttpStatus(u16),
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Wraps raw values as-is. Values must be finite and non-empty.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector("non-finite component".into()));
        }
        Ok(Self { dim: values.len(), values })
    }

    /// Scales `values` to unit L2 norm. Fails on the zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let mut v = Self::new(values)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::InvalidVector("zero vector".into()));
        }
        v.values.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    /// Re-checks the invariants after deserialization.
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.values.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.dim, got: self.values.len() });
        }
        if self.dim == 0 || self.values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector("empty or non-finite".into()));
        }
        Ok(())
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim != b.dim {
        return Err(EmbeddingError::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Query-key semantic relevance: cosine clamped to `[0, 1]`.
pub fn semantic_score(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    Ok(cosine_similarity(a, b)?.max(0.0))
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteHttp,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderSpec {
    pub kind: ProviderKind,
    pub model_id: String,
    pub endpoint: Option<String>,
    pub dim: usize,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        Self::deterministic(HashingEncoder::DEFAULT_DIM)
    }
}

impl EmbeddingProviderSpec {
    pub fn deterministic(dim: usize) -> Self {
        Self {
            kind: ProviderKind::DeterministicTest,
            model_id: "feature-hash-v1".into(),
            endpoint: None,
            dim,
            api_key_env: None,
            timeout_secs: 30.0,
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::InvalidSpec("dim must be positive".into()));
        }
        if self.kind == ProviderKind::RemoteHttp
            && self.endpoint.as_deref().map_or(true, |e| e.trim().is_empty())
        {
            return Err(EmbeddingError::InvalidSpec("remote provider requires an endpoint".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(EmbeddingError::InvalidSpec("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn TextEncoder>, EmbeddingError> {
        self.build_with_transport(Arc::new(UreqTransport))
    }

    pub fn build_with_transport(
        &self,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Arc<dyn TextEncoder>, EmbeddingError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::DeterministicTest => Arc::new(HashingEncoder::new(self.dim)),
            ProviderKind::RemoteHttp => Arc::new(RemoteEncoder { spec: self.clone(), transport }),
        })
    }
}

/// One-shot convenience: build the provider and embed `text`.
pub fn embed(text: &str, provider: &EmbeddingProviderSpec) -> Result<EmbeddingVector, EmbeddingError> {
    provider.build()?.embed(text)
}

/// Offline encoder: signed feature hashing of word tokens into `dim`
/// buckets, then L2 normalization.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
    seed: u64,
}

impl HashingEncoder {
    pub const DEFAULT_DIM: usize = 256;
    pub const DEFAULT_SEED: u64 = 0x5eed_1d_a7a;

    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, Self::DEFAULT_SEED)
    }

    pub fn with_seed(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dim must be positive");
        Self { dim, seed }
    }

    fn accumulate(&self, feature: &[u8], acc: &mut [f64]) {
        let h = fnv1a64(self.seed, feature);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign;
    }
}

impl TextEncoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut acc = vec![0.0; self.dim];
        for token in tokenize(trimmed) {
            self.accumulate(token.as_bytes(), &mut acc);
        }
        if acc.iter().all(|&x| x == 0.0) {
            // no word tokens, or their signs cancelled
            self.accumulate(trimmed.as_bytes(), &mut acc);
            if acc.iter().all(|&x| x == 0.0) {
                acc[0] = 1.0;
            }
        }
        EmbeddingVector::normalized(acc)
    }
}

/// Client for `POST {endpoint}` with body `{"model", "input": [text]}` and
/// response `{"data": [{"embedding": [...]}]}`.
pub struct RemoteEncoder {
    spec: EmbeddingProviderSpec,
    transport: Arc<dyn HttpTransport>,
}

impl TextEncoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let token = match &self.spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EmbeddingError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let endpoint = self.spec.endpoint.as_deref().unwrap_or_default();
        let body = serde_json::json!({ "model": self.spec.model_id, "input": [text] });
        let resp = self
            .transport
            .post_json(endpoint, token.as_deref(), &body, Duration::from_secs_f64(self.spec.timeout_secs))
            .map_err(|e| match e {
                TransportError::Timeout => EmbeddingError::ProviderUnreachable("timeout".into()),
                TransportError::Connect(msg) => EmbeddingError::ProviderUnreachable(msg),
            })?;
        if !(200..300).contains(&resp.status) {
            return Err(EmbeddingError::HttpStatus(resp.status));
        }
        let parsed: serde_json::Value = serde_json::from_str(&resp.body)
            .map_err(|e| EmbeddingError::MalformedResponse(e.to_string()))?;
        let values: Vec<f64> = parsed
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EmbeddingError::MalformedResponse("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| EmbeddingError::MalformedResponse("non-numeric component".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.spec.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.spec.dim, got: values.len() });
        }
        EmbeddingVector::normalized(values)
    }
}
