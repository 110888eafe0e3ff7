//! Classifier input construction: `[claim | cosine(claim, doc) | doc]`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("embedding is empty")]
    Empty,
    #[error("embedding entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

/// A non-empty vector of finite values for one text or one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.is_empty() {
            return Err(FeatureError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, FeatureError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Assembled classifier input of dimension `2 * d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures(Vec<f64>);

impl PairFeatures {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Dimension of the embeddings this was assembled from.
    pub fn source_dim(&self) -> usize {
        self.0.len() / 2
    }

    pub fn claim(&self) -> &[f64] {
        &self.0[..self.source_dim()]
    }

    pub fn cosine(&self) -> f64 {
        self.0[self.source_dim()]
    }

    pub fn document(&self) -> &[f64] {
        &self.0[self.source_dim() + 1..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, FeatureError> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn assemble(
    claim: &EmbeddingVector,
    doc: &EmbeddingVector,
) -> Result<PairFeatures, FeatureError> {
    let sim = cosine(claim, doc)?;
    let mut out = Vec::with_capacity(2 * claim.dim() + 1);
    out.extend_from_slice(claim.values());
    out.push(sim);
    out.extend_from_slice(doc.values());
    Ok(PairFeatures(out))
}
