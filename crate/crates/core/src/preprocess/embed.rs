//! Query embedding providers.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::gateway::{GatewayError, HttpBackend};

pub const LOCAL_DIM: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text (item {0})")]
    Empty(usize),
    #[error("embedding {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, got: usize, expected: usize },
    #[error("embedding {0} has zero norm")]
    ZeroNorm(usize),
    #[error(transparent)]
    Remote(#[from] GatewayError),
}

pub trait Embedder: Send + Sync {
    /// Recorded with every index so vectors from different providers never mix.
    fn id(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Character 3-grams hashed into 256 buckets, L2-normalized. Deterministic
/// and dependency-free, which is all the tests need.
#[derive(Debug, Clone, Default)]
pub struct LocalEmbedder;

impl LocalEmbedder {
    fn vector(text: &str) -> Vec<f64> {
        let norm: String = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        let padded: Vec<char> = format!(" {norm} ").chars().collect();
        let mut v = vec![0.0; LOCAL_DIM];
        for w in padded.windows(3) {
            let mut h = FnvHasher::default();
            for c in w {
                h.write_u32(*c as u32);
            }
            v[(h.finish() % LOCAL_DIM as u64) as usize] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl Embedder for LocalEmbedder {
    fn id(&self) -> String {
        format!("local-3gram-{LOCAL_DIM}")
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| if t.trim().is_empty() { Err(EmbedError::Empty(i)) } else { Ok(Self::vector(t)) })
            .collect()
    }
}

/// An HTTP embeddings endpoint.
pub struct RemoteEmbedder {
    pub backend: HttpBackend,
    pub model: String,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::Empty(i));
        }
        let vecs = self.backend.embed(&self.model, texts)?;
        check_vectors(&vecs)?;
        Ok(vecs)
    }
}

/// Same dimension throughout, no zero vectors.
pub fn check_vectors(vecs: &[Vec<f64>]) -> Result<(), EmbedError> {
    let Some(first) = vecs.first() else { return Ok(()) };
    for (i, v) in vecs.iter().enumerate() {
        if v.len() != first.len() {
            return Err(EmbedError::Dimension { index: i, got: v.len(), expected: first.len() });
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(EmbedError::ZeroNorm(i));
        }
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
