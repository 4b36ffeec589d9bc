//! Text embeddings and exact cosine retrieval.
//!
//! The default [`HashingEncoder`] hashes tokens into a fixed number of
//! buckets, weights them by term frequency and L2-normalizes the result. It
//! is pure and deterministic, which is what lets the whole test suite run
//! offline. [`HttpEncoder`] talks to a sentence-embedding service instead.

mod http;
mod index;

pub use http::HttpEncoder;
pub use index::{IndexHeader, Passage, PassageRecord, ScoredPassage, VectorIndex};

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

/// Embedding width used throughout (MiniLM-sized).
pub const DIMENSION: usize = 384;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding has non-finite components")]
    NonFinite,
    #[error("remote encoder failure: {0}")]
    RemoteEncoderFailure(String),
    #[error("duplicate passage id {0:?}")]
    DuplicatePassage(String),
    #[error("passage {0:?} has empty text")]
    EmptyPassage(String),
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
    #[error("index format: {0}")]
    Format(String),
}

/// Dense vector. Constructed values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy; a zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|v| v / n).collect())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| v * alpha).collect())
    }
}

/// dot(a,b) / (|a||b|), clamped to [-1, 1]; 0 when either norm is 0.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    // sqrt of the product keeps cosine(a,b) == cosine(b,a) bit-for-bit
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

pub trait Encoder: Send + Sync {
    /// Identifier written into index headers.
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Feature-hashing bag-of-tokens encoder.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dimension: usize,
}

impl HashingEncoder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "encoder dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DIMENSION)
    }
}

impl Encoder for HashingEncoder {
    fn name(&self) -> String {
        format!("hashing-tf-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        for t in &tokens {
            v[self.bucket(t)] += 1.0;
        }
        Ok(Embedding(v).normalized())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(i: usize) -> Embedding {
        let mut v = vec![0.0; DIMENSION];
        v[i] = 1.0;
        Embedding::new(v).unwrap()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let enc = HashingEncoder::default();
        let a = enc.embed("smoking causes lung cancer").unwrap();
        let b = enc.embed("smoking causes lung cancer").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dimension(), DIMENSION);
    }

    #[test]
    fn empty_text_rejected() {
        let enc = HashingEncoder::default();
        assert!(matches!(enc.embed(""), Err(EmbeddingError::EmptyText)));
        assert!(matches!(enc.embed("  ?! "), Err(EmbeddingError::EmptyText)));
    }

    #[test]
    fn bag_of_tokens_is_order_insensitive() {
        // Hand-built oracle: one count in each token's bucket, then normalize.
        let enc = HashingEncoder::default();
        let mut oracle = vec![0.0; DIMENSION];
        oracle[enc.bucket("diabetes")] += 1.0;
        oracle[enc.bucket("kidney")] += 1.0;
        let oracle = Embedding::new(oracle).unwrap().normalized();
        let a = enc.embed("diabetes kidney").unwrap();
        let b = enc.embed("kidney diabetes").unwrap();
        assert_eq!(a, oracle);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&unit(0), &unit(1)).unwrap(), 0.0);
        let mut v = vec![0.0; DIMENSION];
        v[0] = 1.0;
        v[1] = 1.0;
        let c = cosine(&unit(0), &Embedding::new(v).unwrap()).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        let z = Embedding::zeros(DIMENSION);
        assert_eq!(cosine(&z, &unit(3)).unwrap(), 0.0);
        let short = Embedding::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            cosine(&short, &unit(0)),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 16)
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in vec_strategy(), b in vec_strategy()) {
            let (a, b) = (Embedding::new(a).unwrap(), Embedding::new(b).unwrap());
            prop_assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
        }

        #[test]
        fn cosine_is_scale_invariant(a in vec_strategy(), b in vec_strategy(), alpha in 0.01f64..100.0) {
            let (a, b) = (Embedding::new(a).unwrap(), Embedding::new(b).unwrap());
            let lhs = cosine(&a.scaled(alpha), &b).unwrap();
            prop_assert!((lhs - cosine(&a, &b).unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn self_cosine_is_one(a in vec_strategy()) {
            let a = Embedding::new(a).unwrap();
            prop_assume!(a.norm() > 1e-6);
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
