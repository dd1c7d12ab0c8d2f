//! Hashed bag-of-words features.
//!
//! Tokens are lowercase runs of alphanumeric characters. Each token is
//! hashed with 64-bit FNV-1a over its UTF-8 bytes, reduced modulo the
//! feature dimension, and the resulting count vector is L2-normalized.
//! The hash is fixed so features are bit-identical across platforms.

use std::collections::BTreeMap;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased unigrams, split on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i] * v).sum()
    }
}

/// Hashes `text` into a unit-norm count vector of dimension `dims`.
///
/// Empty or token-free text gives the zero vector.
pub fn featurize(text: &str, dims: usize) -> SparseVector {
    assert!(dims >= 2, "feature dimension must be at least 2");
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokenize(text) {
        let slot = (fnv1a64(token.as_bytes()) % dims as u64) as usize;
        *counts.entry(slot).or_default() += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    SparseVector {
        entries: counts.into_iter().map(|(i, c)| (i, c / norm)).collect(),
    }
}
