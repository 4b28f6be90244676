//! Tokenization shared by dataset statistics, text embeddings, and metrics.

use unicode_segmentation::UnicodeSegmentation;

/// UAX-29 word tokens. Punctuation and whitespace are dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.unicode_words().collect()
}

pub fn token_count(text: &str) -> usize {
    text.unicode_words().count()
}

/// 64-bit FNV-1a. Stable across platforms and toolchains, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
