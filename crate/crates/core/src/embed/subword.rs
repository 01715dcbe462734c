//! Character n-gram extraction and bucket hashing for the subword model.

use super::SubwordConfig;

/// FNV-1a 32-bit hash.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2166136261;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(16777619);
    }
    h
}

/// All character n-grams of the bracketed word `<word>` with
/// `min_n <= n <= max_n`, in (n, position) order. The full bracketed form
/// is itself an n-gram when its length fits the range.
pub fn ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    assert!(min_n >= 1 && min_n <= max_n, "need 1 <= min_n <= max_n");
    let bracketed: Vec<char> = format!("<{word}>").chars().collect();
    let len = bracketed.len();
    let mut out = Vec::new();
    for n in min_n..=max_n.min(len) {
        for start in 0..=(len - n) {
            out.push(bracketed[start..start + n].iter().collect());
        }
    }
    out
}

/// Bucket rows for a word's n-grams: FNV-1a of the n-gram bytes, modulo the
/// bucket count. Duplicates are kept — a bucket hit twice contributes twice,
/// matching the gradient distribution.
pub fn bucket_ids(word: &str, config: &SubwordConfig) -> Vec<u32> {
    ngrams(word, config.min_n, config.max_n)
        .iter()
        .map(|g| (fnv1a(g.as_bytes()) as usize % config.buckets) as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acha_has_ten_ngrams_in_3_to_6() {
        let grams = ngrams("acha", 3, 6);
        assert_eq!(grams.len(), 10);
        for g in ["<ac", "ach", "cha", "ha>", "<ach", "acha", "cha>", "<acha", "acha>", "<acha>"] {
            assert!(grams.iter().any(|x| x == g), "missing {g}");
        }
    }

    #[test]
    fn too_short_words_have_no_ngrams() {
        // bracketed "acha" is 6 characters, below min_n = 7
        assert!(ngrams("acha", 7, 7).is_empty());
    }

    #[test]
    fn fnv1a_reference_values() {
        // standard FNV-1a test vectors
        assert_eq!(fnv1a(b""), 2166136261);
        assert_eq!(fnv1a(b"a"), 0xe40c292c);
        assert_eq!(fnv1a(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn bucket_ids_are_in_range() {
        let cfg = SubwordConfig { min_n: 3, max_n: 6, buckets: 97 };
        for b in bucket_ids("zabardast", &cfg) {
            assert!((b as usize) < 97);
        }
    }
}
