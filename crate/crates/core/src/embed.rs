//! Text embedding for clustering and representative selection.
//!
//! The default embedder hashes character 3-grams into a fixed-width count
//! vector and L2-normalizes it. It is deterministic and dependency-free;
//! service-backed embeddings can be plugged in through the trait.

use crate::hashing::fnv1a;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Hashed character-3-gram count vectors, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self::new(1024)
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut vector = vec![0f32; self.dim];
        let chars: Vec<char> = text.chars().collect();
        let mut bucket = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let idx = (fnv1a(s.as_bytes()) % self.dim as u64) as usize;
            vector[idx] += 1.0;
        };
        if chars.is_empty() {
            return vector;
        }
        if chars.len() < 3 {
            bucket(&chars);
        } else {
            for window in chars.windows(3) {
                bucket(window);
            }
        }
        let norm: f32 = vector.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            for v in &mut vector {
                *v /= norm;
            }
        }
        vector
    }
}

/// Cosine distance in [0, 2]; 1.0 when either vector is all-zero.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut dot = 0f32;
    let mut na = 0f32;
    let mut nb = 0f32;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_zero_distance() {
        let e = HashedNgramEmbedder::default();
        let a = e.embed("the quick brown fox");
        let b = e.embed("the quick brown fox");
        assert!(cosine_distance(&a, &b).abs() < 1e-6);
    }

    #[test]
    fn related_texts_are_closer_than_unrelated() {
        let e = HashedNgramEmbedder::default();
        let base = e.embed("compute the running total");
        let near = e.embed("compute the running sum");
        let far = e.embed("zzzz qqqq xxxx wwww");
        assert!(cosine_distance(&base, &near) < cosine_distance(&base, &far));
    }

    #[test]
    fn vectors_are_unit_norm() {
        let e = HashedNgramEmbedder::new(256);
        let v = e.embed("hello world");
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn short_and_empty_inputs() {
        let e = HashedNgramEmbedder::default();
        assert!(e.embed("").iter().all(|v| *v == 0.0));
        let ab = e.embed("ab");
        assert!(ab.iter().any(|v| *v > 0.0));
    }
}
