//! Frozen, deterministic input featurizers.
//!
//! These never train; only the projection matrices sitting on top of them
//! do. The text featurizer hashes unigram and bigram counts into a fixed
//! number of signed buckets, so word order matters and the output depends
//! only on `(seed, tokens)`.

use crate::error::{DlnError, Result};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    ImageFeatures,
    TextFeatures,
}

#[derive(Debug, Clone)]
pub struct FrozenFeatureExtractor {
    pub kind: FeatureKind,
    pub dim: usize,
    pub seed: u64,
}

impl FrozenFeatureExtractor {
    pub fn image(dim: usize) -> Self {
        FrozenFeatureExtractor {
            kind: FeatureKind::ImageFeatures,
            dim,
            seed: 0,
        }
    }

    pub fn text(dim: usize, seed: u64) -> Self {
        FrozenFeatureExtractor {
            kind: FeatureKind::TextFeatures,
            dim,
            seed,
        }
    }

    /// Image features are precomputed and arrive as raw vectors; this just
    /// enforces the dimension contract.
    pub fn image_features<T: Scalar>(&self, raw: &[f64]) -> Result<Vec<T>> {
        if self.kind != FeatureKind::ImageFeatures {
            return Err(DlnError::State("extractor is not an image featurizer".into()));
        }
        if raw.len() != self.dim {
            return Err(DlnError::Shape {
                op: "image_features",
                lhs: vec![self.dim],
                rhs: vec![raw.len()],
            });
        }
        Ok(raw.iter().map(|&v| T::from_f64(v)).collect())
    }

    /// L2-normalized signed hash of unigram + bigram counts.
    pub fn text_features<T: Scalar>(&self, tokens: &[String]) -> Result<Vec<T>> {
        if self.kind != FeatureKind::TextFeatures {
            return Err(DlnError::State("extractor is not a text featurizer".into()));
        }
        if tokens.is_empty() {
            return Err(DlnError::Argument("text featurizer needs a non-empty sequence".into()));
        }
        let mut buckets = vec![0.0f64; self.dim];
        let mut add = |gram: &str| {
            let h = fnv1a64(self.seed, gram.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
            buckets[slot] += sign;
        };
        for t in tokens {
            add(t);
        }
        let mut joined = String::new();
        for pair in tokens.windows(2) {
            joined.clear();
            joined.push_str(&pair[0]);
            joined.push('\u{1f}');
            joined.push_str(&pair[1]);
            add(&joined);
        }
        let norm: f64 = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in buckets.iter_mut() {
                *v /= norm;
            }
        }
        Ok(buckets.iter().map(|&v| T::from_f64(v)).collect())
    }
}

/// FNV-1a over the seed bytes followed by the data.
fn fnv1a64(seed: u64, data: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for b in seed.to_le_bytes().iter().chain(data.iter()) {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn text_features_are_deterministic() {
        let ex = FrozenFeatureExtractor::text(32, 7);
        let a: Vec<f64> = ex.text_features(&toks(&["a", "quiet", "river"])).unwrap();
        let b: Vec<f64> = ex.text_features(&toks(&["a", "quiet", "river"])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn word_order_changes_features() {
        let ex = FrozenFeatureExtractor::text(32, 7);
        let a: Vec<f64> = ex.text_features(&toks(&["river", "quiet", "a"])).unwrap();
        let b: Vec<f64> = ex.text_features(&toks(&["a", "quiet", "river"])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a: Vec<f64> = FrozenFeatureExtractor::text(32, 1)
            .text_features(&toks(&["dog"]))
            .unwrap();
        let b: Vec<f64> = FrozenFeatureExtractor::text(32, 2)
            .text_features(&toks(&["dog"]))
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn text_features_are_unit_norm() {
        let ex = FrozenFeatureExtractor::text(48, 3);
        let f: Vec<f64> = ex.text_features(&toks(&["the", "old", "house"])).unwrap();
        let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_is_argument_error() {
        let ex = FrozenFeatureExtractor::text(16, 1);
        assert!(matches!(
            ex.text_features::<f64>(&[]),
            Err(DlnError::Argument(_))
        ));
    }

    #[test]
    fn image_features_enforce_dimension() {
        let ex = FrozenFeatureExtractor::image(4);
        assert!(ex.image_features::<f32>(&[0.0; 3]).is_err());
        let out: Vec<f32> = ex.image_features(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
