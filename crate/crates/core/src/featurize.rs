//! Deterministic text-to-vector mapping feeding the drift detector.
//!
//! Token n-grams are hashed with 64-bit FNV-1a into a signed, fixed-dimension
//! vector (dimension `2^dim_log2`), then L2-normalized. The hash is
//! implemented inline so the mapping is bit-stable across platforms and
//! releases, which the golden-fixture tests rely on.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Separator byte joining adjacent tokens into an n-gram. U+001F (unit
/// separator) cannot appear inside a token, so joined n-grams never collide
/// with single tokens.
const NGRAM_SEP: char = '\u{1f}';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    /// Vector dimension exponent: d = 2^dim_log2, valid range [6, 22].
    pub dim_log2: u8,
    /// Which n-gram orders to emit; subset of {1, 2}, non-empty.
    pub ngram_orders: BTreeSet<u8>,
    pub lowercase: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim_log2: 14,
            ngram_orders: BTreeSet::from([1, 2]),
            lowercase: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn new(
        dim_log2: u8,
        ngram_orders: impl IntoIterator<Item = u8>,
        lowercase: bool,
    ) -> Result<Self, FeaturizeError> {
        let cfg = FeaturizerConfig {
            dim_log2,
            ngram_orders: ngram_orders.into_iter().collect(),
            lowercase,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FeaturizeError> {
        if !(6..=22).contains(&self.dim_log2) {
            return Err(FeaturizeError::InvalidDimLog2(self.dim_log2));
        }
        if self.ngram_orders.is_empty() {
            return Err(FeaturizeError::EmptyNgramOrders);
        }
        if let Some(&bad) = self.ngram_orders.iter().find(|&&n| n == 0 || n > 2) {
            return Err(FeaturizeError::UnsupportedNgramOrder(bad));
        }
        Ok(())
    }

    /// Vector dimension d = 2^dim_log2.
    pub fn dim(&self) -> usize {
        1usize << self.dim_log2
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FeaturizeError {
    #[error("dim_log2 {0} outside [6, 22]")]
    InvalidDimLog2(u8),
    #[error("ngram_orders must be non-empty")]
    EmptyNgramOrders,
    #[error("unsupported n-gram order {0} (only 1 and 2)")]
    UnsupportedNgramOrder(u8),
}

/// Dense real vector produced by [`featurize`].
///
/// Vectors produced by `featurize` are either all-zero (empty text) or have
/// unit L2 norm. Hand-constructed vectors (e.g. synthetic streams in tests)
/// may carry arbitrary values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        FeatureVector { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Squared Euclidean distance to another vector of the same dimension.
    pub fn sq_dist(&self, other: &FeatureVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Splits `text` into maximal alphanumeric runs and emits the configured
/// n-gram orders in ascending order, each in text order. Adjacent tokens in
/// an n-gram are joined with a single U+001F separator.
pub fn tokenize(text: &str, config: &FeaturizerConfig) -> Vec<String> {
    let normalized;
    let source = if config.lowercase {
        normalized = text.to_lowercase();
        normalized.as_str()
    } else {
        text
    };

    let mut base: Vec<&str> = Vec::new();
    let mut start = None;
    for (i, ch) in source.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            base.push(&source[s..i]);
        }
    }
    if let Some(s) = start {
        base.push(&source[s..]);
    }

    let mut out = Vec::new();
    for &order in &config.ngram_orders {
        let n = order as usize;
        if base.len() < n {
            continue;
        }
        for window in base.windows(n) {
            out.push(window.join(&NGRAM_SEP.to_string()));
        }
    }
    out
}

/// Signed feature hashing: each n-gram's FNV-1a hash selects an index
/// (`hash mod d`) and a sign (+1 when bit 63 is clear), signs accumulate,
/// and the result is L2-normalized unless all-zero. Byte-identical output
/// for identical `(text, config)`.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> FeatureVector {
    let d = config.dim();
    let mut values = vec![0.0f64; d];
    for ngram in tokenize(text, config) {
        let hash = fnv1a64(ngram.as_bytes());
        let idx = (hash % d as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        values[idx] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    FeatureVector { values }
}
