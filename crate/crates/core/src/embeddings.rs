//! Training-free string embeddings: seeded, signed character-trigram feature hashing.
//!
//! `embed_value` plays the role of the column-value map and `embed_record` the
//! whole-row map used by the neighborhood features. Both are L2-normalized, so
//! Euclidean distances between embeddings stay in `[0, 2]`.

use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};

const PAD_START: char = '\u{2}';
const PAD_END: char = '\u{3}';
const FIELD_SEP: u8 = 0x1f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    /// Width of value embeddings.
    pub m: usize,
    /// Width of record embeddings.
    pub q: usize,
    pub hash_seed: u64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            m: 32,
            q: 64,
            hash_seed: 0x5eed_f00d,
        }
    }
}

impl EmbeddingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.q == 0 {
            return Err(FusionError::InvalidConfig(
                "embedding dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded 64-bit hash of `prefix ␟ trigram` (FNV-1a, then a splitmix64 finalizer).
pub fn trigram_hash(seed: u64, prefix: &str, trigram: &[char; 3]) -> u64 {
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    };
    for &b in prefix.as_bytes() {
        feed(b);
    }
    feed(FIELD_SEP);
    let mut buf = [0u8; 4];
    for c in trigram {
        for &b in c.encode_utf8(&mut buf).as_bytes() {
            feed(b);
        }
    }
    splitmix64(h)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket and sign a hash lands on in a `dim`-wide vector.
pub fn bucket(hash: u64, dim: usize) -> (usize, f64) {
    let idx = ((hash >> 1) % dim as u64) as usize;
    let sign = if hash & 1 == 0 { 1.0 } else { -1.0 };
    (idx, sign)
}

/// Trigrams of `s` padded with one start and one end sentinel.
/// The empty string yields none.
pub fn padded_trigrams(s: &str) -> Vec<[char; 3]> {
    if s.is_empty() {
        return Vec::new();
    }
    let mut chars = Vec::with_capacity(s.len() + 2);
    chars.push(PAD_START);
    chars.extend(s.chars());
    chars.push(PAD_END);
    chars.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

fn accumulate(out: &mut [f64], seed: u64, prefix: &str, s: &str) {
    let dim = out.len();
    for tri in padded_trigrams(s) {
        let (idx, sign) = bucket(trigram_hash(seed, prefix, &tri), dim);
        out[idx] += sign;
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn embed_value(value: &str, spec: &EmbeddingSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.m];
    accumulate(&mut out, spec.hash_seed, "", value);
    normalize(&mut out);
    out
}

/// Hashes every cell's trigrams keyed by its attribute name into one `q`-wide vector.
pub fn embed_record<S: AsRef<str>>(schema: &[String], row: &[S], spec: &EmbeddingSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.q];
    for (name, cell) in schema.iter().zip(row) {
        accumulate(&mut out, spec.hash_seed, name, cell.as_ref());
    }
    normalize(&mut out);
    out
}

pub fn distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(FusionError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(u
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    // Reference: exact trigram multiset first, hashed into buckets afterwards.
    fn reference(s: &str, spec: &EmbeddingSpec) -> Vec<f64> {
        let mut chars = vec!['\u{2}'];
        chars.extend(s.chars());
        chars.push('\u{3}');
        let mut counts: HashMap<[char; 3], i64> = HashMap::new();
        if !s.is_empty() {
            for w in chars.windows(3) {
                *counts.entry([w[0], w[1], w[2]]).or_default() += 1;
            }
        }
        let mut v = vec![0.0; spec.m];
        for (tri, n) in counts {
            let (idx, sign) = bucket(trigram_hash(spec.hash_seed, "", &tri), spec.m);
            v[idx] += sign * n as f64;
        }
        v
    }

    #[test]
    fn empty_string_is_zero() {
        let spec = EmbeddingSpec::default();
        assert!(embed_value("", &spec).iter().all(|&x| x == 0.0));
        let schema = vec!["a".to_string(), "b".to_string()];
        assert!(embed_record(&schema, &["", ""], &spec).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic() {
        let spec = EmbeddingSpec::default();
        assert_eq!(embed_value("abc", &spec), embed_value("abc", &spec));
        let schema = vec!["a".to_string()];
        assert_eq!(
            embed_record(&schema, &["abc"], &spec),
            embed_record(&schema, &["abc"], &spec)
        );
    }

    #[test]
    fn short_strings_still_embed() {
        let spec = EmbeddingSpec::default();
        let v = embed_value("a", &spec);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attribute_prefix_disambiguates_columns() {
        let spec = EmbeddingSpec::default();
        let schema = vec!["City".to_string(), "State".to_string()];
        let a = embed_record(&schema, &["Seattle", "WA"], &spec);
        let b = embed_record(&schema, &["WA", "Seattle"], &spec);
        assert_ne!(a, b);
    }

    #[test]
    fn pythagorean_distance() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_matches_reference(s in "\\PC{0,12}", t in "\\PC{0,12}") {
            let spec = EmbeddingSpec { m: 16, ..Default::default() };
            let got = cosine(&embed_value(&s, &spec), &embed_value(&t, &spec));
            let want = cosine(&reference(&s, &spec), &reference(&t, &spec));
            prop_assert!((got - want).abs() < 1e-9);
        }

        #[test]
        fn nonzero_embeddings_have_unit_norm(s in "\\PC{1,20}") {
            let v = embed_value(&s, &EmbeddingSpec::default());
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn distance_is_symmetric(u in prop::collection::vec(-5.0f64..5.0, 6), v in prop::collection::vec(-5.0f64..5.0, 6)) {
            prop_assert_eq!(distance(&u, &v).unwrap(), distance(&v, &u).unwrap());
        }
    }
}
