//! Tokenization, stable hashing, and seed derivation.
//!
//! Everything downstream (feature hashing, negative sampling, train/eval
//! splits) goes through these helpers, so they are deliberately tiny and
//! platform-independent: FNV-1a on bytes, no locale-sensitive operations.

/// Split `text` on non-alphanumeric boundaries and lowercase each piece.
///
/// Empty pieces are dropped, so `"foo__bar("` yields `["foo", "bar"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Number of whitespace-separated tokens. Used for prompt budgeting.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// FNV-1a 64-bit hash. Stable across platforms and releases; this exact
/// function pins bucket assignment and seed derivation, so do not change it.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash a token into one of `buckets` slots.
pub fn hash_bucket(token: &str, buckets: usize) -> usize {
    debug_assert!(buckets > 0);
    (fnv1a64(token.as_bytes()) % buckets as u64) as usize
}

/// Derive a child seed from a root seed and a string label.
///
/// Used to give every query / stage / epoch its own RNG stream while keeping
/// the whole pipeline reproducible from one root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut data = Vec::with_capacity(8 + label.len());
    data.extend_from_slice(&root.to_le_bytes());
    data.extend_from_slice(label.as_bytes());
    fnv1a64(&data)
}

/// Largest `f64` strictly below 1.0.
///
/// Similarity labels live in `[0, 1)`; identical texts map here instead of
/// to 1.0, which is reserved for training positives.
pub const MAX_BELOW_ONE: f64 = 0.999_999_999_999_999_9;

/// Fraction of the `[0, 1)` unit interval assigned to `id` by hashing.
///
/// Deterministic in `(root, kind, id)`; used for held-out splits so that
/// training and evaluation agree on the split without sharing state.
pub fn unit_fraction(root: u64, kind: &str, id: &str) -> f64 {
    let h = derive_seed(derive_seed(root, kind), id);
    // 53 high bits -> uniform double in [0, 1).
    (h >> 11) as f64 / (1u64 << 53) as f64
}
