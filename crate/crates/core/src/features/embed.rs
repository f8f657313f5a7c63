use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::{fnv1a, FNV_OFFSET};
use crate::text::canonical;

/// Basis of the index hash (plain FNV-1a 64).
const INDEX_BASIS: u64 = FNV_OFFSET;
/// Basis of the sign hash.
const SIGN_BASIS: u64 = FNV_OFFSET ^ 0x9e37_79b9_7f4a_7c15;

/// Sparse storage of a `dim`-dimensional real vector; entries sorted by index,
/// zeros omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
    normalized: bool,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Vec::new(), normalized: false }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u32, *v)).collect();
        Self { dim: values.len(), entries, normalized: false }
    }

    /// Sorted, zero-free entries as produced by [`FeatureVector::entries`].
    pub(crate) fn from_entries(dim: usize, entries: Vec<(u32, f64)>, normalized: bool) -> Self {
        Self { dim, entries, normalized }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries.binary_search_by_key(&(index as u32), |e| e.0).map(|i| self.entries[i].1).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i as usize] = x;
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, x)| x * dense[i as usize]).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn normalize(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for e in &mut self.entries {
                e.1 /= n;
            }
        }
        self.normalized = true;
        self
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Signed feature hashing of character n-grams with lengths in
/// `[ngram_lo, ngram_hi]`, L2-normalized. The text is canonicalized
/// (NFC, lowercase, whitespace collapsed) first.
///
/// Panics if `dim` is not a power of two or the n-gram range is empty.
pub fn embed(text: &str, dim: usize, ngram_lo: usize, ngram_hi: usize) -> FeatureVector {
    assert!(dim.is_power_of_two(), "dim must be a power of two");
    assert!(ngram_lo >= 1 && ngram_lo <= ngram_hi, "invalid n-gram range");
    let chars: Vec<char> = canonical(text).chars().collect();
    let mask = (dim - 1) as u64;
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let mut gram = String::new();
    for n in ngram_lo..=ngram_hi {
        for w in chars.windows(n) {
            gram.clear();
            gram.extend(w);
            let idx = (fnv1a(gram.as_bytes(), INDEX_BASIS) & mask) as u32;
            let sign = if fnv1a(gram.as_bytes(), SIGN_BASIS) & 1 == 0 { 1.0 } else { -1.0 };
            *acc.entry(idx).or_insert(0.0) += sign;
        }
    }
    let entries = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
    FeatureVector { dim, entries, normalized: false }.normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub ngram_lo: usize,
    pub ngram_hi: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { dim: 1 << 16, ngram_lo: 1, ngram_hi: 3 }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() {
            return Err(invalid(format!("embedding dim {} is not a power of two", self.dim)));
        }
        if self.ngram_lo == 0 || self.ngram_lo > self.ngram_hi {
            return Err(invalid(format!("invalid n-gram range {}..={}", self.ngram_lo, self.ngram_hi)));
        }
        Ok(())
    }
}

/// Text → vector. The slot a neural sentence encoder would fill.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> FeatureVector;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashedNgramEmbedder {
    pub config: EmbedConfig,
}

impl HashedNgramEmbedder {
    pub fn new(config: EmbedConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> FeatureVector {
        embed(text, self.config.dim, self.config.ngram_lo, self.config.ngram_hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_zero() {
        let v = embed("", 64, 1, 3);
        assert_eq!(v.nnz(), 0);
        assert_eq!(v.norm(), 0.0);
        assert_eq!(embed("   ", 64, 1, 3).nnz(), 0);
    }

    #[test]
    fn self_cosine_is_one() {
        let v = embed("the cat sat", 1 << 16, 1, 3);
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_alphabets_are_nearly_orthogonal() {
        let a = embed("the quick brown fox jumps over the lazy dog", 1 << 16, 1, 3);
        // no shared characters, not even the space
        let b = embed("\u{43c}\u{430}\u{43d}-\u{431}\u{430}-\u{43c}\u{430}\u{43a}\u{442}\u{430}\u{431}-\u{440}\u{430}\u{444}\u{442}\u{430}\u{43c}", 1 << 16, 1, 3);
        assert!(cosine(&a, &b).abs() < 0.05);
    }

    #[test]
    fn whitespace_and_case_do_not_matter() {
        assert_eq!(embed("Hello   world", 256, 1, 3), embed(" hello world ", 256, 1, 3));
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let a = embed("abcabc", 32, 1, 2);
        let b = embed("bcd", 32, 1, 2);
        let dense: f64 = a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| x * y).sum();
        assert!((a.dot(&b) - dense).abs() < 1e-12);
        assert!((a.dot_dense(&b.to_dense()) - dense).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_is_zero_or_one(s in "\\PC{0,60}", lo in 1usize..3, extra in 0usize..3) {
            let v = embed(&s, 1024, lo, lo + extra);
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-9);
            prop_assert_eq!(v.clone(), embed(&s, 1024, lo, lo + extra));
        }
    }
}
