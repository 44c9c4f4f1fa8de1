//! Deterministic hashing sentence embedder.
//!
//! A text embeds as the L2-normalized sum of hashed token one-hots: each
//! whitespace token increments one of `dim` slots chosen by its hash. The
//! representation is a bag of tokens, so token order does not matter and
//! identical text always embeds identically.

use crate::par;
use crate::types::fnv64;

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct Embedder {
    dim: usize,
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder { dim: DEFAULT_DIM }
    }
}

impl Embedder {
    pub fn new(dim: usize) -> Embedder {
        assert!(dim > 0);
        Embedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embeds one text. Empty input yields the zero vector.
    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in text.split_whitespace() {
            let slot = (fnv64(token.as_bytes()) % self.dim as u64) as usize;
            v[slot] += 1.0;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Vec<Vec<f32>> {
        par::map_slice(texts, |t| self.embed_one(t))
    }
}

/// Whitespace token count, the length measure used for batching and cost.
pub fn token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
