use sha2::{Digest, Sha256};

use super::{check_batch, EmbeddingBackend, Result};
use crate::text::word_tokens;

/// Scales `v` to unit L2 norm; returns `false` for the zero vector.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}


/// Deterministic bag-of-token-hashes embedding for tests and offline runs.
#[derive(Debug, Clone)]
pub struct TestEmbedding {
    dimension: usize,
}

impl TestEmbedding {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        TestEmbedding { dimension }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let digest = Sha256::digest(token.as_bytes());
        let index = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) % self.dimension as u64;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        (index as usize, sign)
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in word_tokens(text) {
            let (i, s) = self.bucket(&token);
            v[i] += s;
        }
        if !l2_normalize(&mut v) {
            let (i, s) = self.bucket(text.trim());
            v[i] = s;
        }
        v
    }
}

impl EmbeddingBackend for TestEmbedding {
    fn backend_id(&self) -> String {
        format!("test_embedding:{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        check_batch(texts)?;
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
