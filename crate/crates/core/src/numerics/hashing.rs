//! Hashed sparse token features and signed random projections.
//!
//! Token multisets become sparse vectors through the classic hashing trick:
//! each token hashes to a bucket and a sign, signed counts accumulate per
//! bucket, and the result is L2-normalized. A second primitive projects an
//! existing sparse vector into a lower dimension with the same bucket/sign
//! construction applied to *indices*; that map is linear and is reused both
//! for the hidden outcome features and for densifying the huge hashed space
//! before any regression touches it.

use crate::error::{Error, Result};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer. Every hash in the crate bottoms out here so that
/// bucket assignments, signs, and derived seeds all share one avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of u64 fields into one seed. Order matters.
pub fn mix_fields(fields: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909; // sqrt(2) fractional bits
    for &f in fields {
        h = mix64(h ^ f);
    }
    h
}

/// Hash arbitrary bytes under a seed (SplitMix-style, chunked little-endian).
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = mix64(seed ^ 0x517C_C1B7_2722_0A95);
    for chunk in bytes.chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ u64::from_le_bytes(buf));
    }
    mix64(h ^ bytes.len() as u64)
}

/// Bucket in `[0, dim)` from the low bits of a hash.
#[inline]
pub fn hash_bucket(h: u64, dim: usize) -> u32 {
    debug_assert!(dim > 0 && dim <= u32::MAX as usize);
    if dim.is_power_of_two() {
        (h & (dim as u64 - 1)) as u32
    } else {
        (h % dim as u64) as u32
    }
}

/// Sign from bit 63 of a hash.
#[inline]
pub fn hash_sign(h: u64) -> f64 {
    if h >> 63 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Sparse vector: strictly increasing indices, no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    /// Build from unsorted (index, value) pairs, merging duplicates and
    /// dropping entries that cancel to exactly zero.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            debug_assert!((i as usize) < dim);
            if let (Some(&last), Some(tail)) = (indices.last(), values.last_mut()) {
                if last == i {
                    *tail += v;
                    continue;
                }
            }
            indices.push(i);
            values.push(v);
        }
        // Drop exact cancellations so nnz reflects real support.
        let mut k = 0;
        for j in 0..indices.len() {
            if values[j] != 0.0 {
                indices[k] = indices[j];
                values[k] = values[j];
                k += 1;
            }
        }
        indices.truncate(k);
        values.truncate(k);
        SparseVec { dim, indices, values }
    }

    pub fn empty(dim: usize) -> Self {
        SparseVec { dim, indices: Vec::new(), values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Sparse–dense dot product. Panics in debug builds on dimension mismatch;
    /// callers validate dimensions at model boundaries.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        debug_assert_eq!(self.dim, dense.len());
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// Elementwise sum of two vectors over the same space.
    pub fn add(&self, other: &SparseVec) -> Result<SparseVec> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut pairs: Vec<(u32, f64)> = self.indices.iter().copied().zip(self.values.iter().copied()).collect();
        pairs.extend(other.indices.iter().copied().zip(other.values.iter().copied()));
        Ok(SparseVec::from_pairs(self.dim, pairs))
    }

    pub fn to_dense(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim);
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Salt for the token-level feature hash. Fixed for the life of the artifact:
/// the feature space itself is not a tunable.
const TOKEN_HASH_SALT: u64 = 0xFEA7_0000_0000_0001;

/// Hash one token into the feature space (bucket and sign come from one hash).
#[inline]
pub fn hash_token(token: &[u8]) -> u64 {
    hash_bytes(token, TOKEN_HASH_SALT)
}

/// Accumulate pre-hashed tokens into a normalized sparse feature vector.
///
/// Shared tail of [`hash_features`] and the generator's fast path (which
/// caches `hash_token` per vocabulary entry instead of rehashing strings).
pub fn features_from_hashes(hashes: impl IntoIterator<Item = u64>, dim: usize) -> Result<SparseVec> {
    let pairs: Vec<(u32, f64)> =
        hashes.into_iter().map(|h| (hash_bucket(h, dim), hash_sign(h))).collect();
    if pairs.is_empty() {
        return Err(Error::EmptyContext);
    }
    let mut vec = SparseVec::from_pairs(dim, pairs);
    let norm = vec.l2_norm();
    if norm > 0.0 {
        vec.scale(1.0 / norm);
    }
    Ok(vec)
}

/// Hash a token multiset into a signed-count, L2-normalized sparse vector.
///
/// index = hash(token) mod dim, value accumulates ±1 per occurrence with the
/// sign taken from bit 63 of the hash. Empty input is an error ("empty
/// context"): a row with no tokens has no feature support and upstream code
/// must not silently treat it as a zero vector.
pub fn hash_features<T: AsRef<[u8]>>(tokens: &[T], dim: usize) -> Result<SparseVec> {
    features_from_hashes(tokens.iter().map(|t| hash_token(t.as_ref())), dim)
}

/// Project a sparse vector into `dim_out` dimensions with hashed buckets and
/// signs derived from the *index* (not the value). The map is linear and
/// deterministic given the seed.
pub fn signed_hash_project(x: &SparseVec, dim_out: usize, seed: u64) -> Array1<f64> {
    let mixed = mix64(seed);
    let mut out = Array1::zeros(dim_out);
    for (i, v) in x.iter() {
        let h = mix64(mixed ^ i as u64);
        out[hash_bucket(h, dim_out) as usize] += hash_sign(h) * v;
    }
    out
}

/// Sparse variant of [`signed_hash_project`]: same map, sparse output.
/// Used to densify hashed features ahead of regression while keeping rows
/// cheap to dot against model weights.
pub fn signed_hash_project_sparse(x: &SparseVec, dim_out: usize, seed: u64) -> SparseVec {
    let mixed = mix64(seed);
    let pairs: Vec<(u32, f64)> = x
        .iter()
        .map(|(i, v)| {
            let h = mix64(mixed ^ i as u64);
            (hash_bucket(h, dim_out), hash_sign(h) * v)
        })
        .collect();
    SparseVec::from_pairs(dim_out, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_repeated_collapses_to_unit_mass() {
        let tokens = vec!["alpha"; 7];
        let v = hash_features(&tokens, 1 << 18).unwrap();
        assert_eq!(v.nnz(), 1);
        let (_, val) = v.iter().next().unwrap();
        assert!((val.abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_context_is_an_error() {
        let tokens: Vec<&str> = Vec::new();
        assert!(matches!(hash_features(&tokens, 16), Err(Error::EmptyContext)));
    }

    /// Forced collision at dim=1: the value must equal the sum of signed
    /// counts, recomputed here directly from the token hashes.
    #[test]
    fn collision_adds_signed_counts() {
        let tokens = ["north", "south", "south", "east"];
        let mut expected = 0.0;
        for t in &tokens {
            expected += hash_sign(hash_token(t.as_bytes()));
        }
        let v = hash_features(&tokens, 1).unwrap();
        if expected == 0.0 {
            assert_eq!(v.nnz(), 0);
        } else {
            let (idx, val) = v.iter().next().unwrap();
            assert_eq!(idx, 0);
            assert!((val - expected.signum()).abs() < 1e-15, "normalized sign");
        }
    }

    #[test]
    fn hashing_is_deterministic() {
        let tokens = ["a", "b", "c", "b"];
        let v1 = hash_features(&tokens, 512).unwrap();
        let v2 = hash_features(&tokens, 512).unwrap();
        assert_eq!(v1, v2);
    }

    /// Independent oracle for the projection of a fixed 3-entry vector at
    /// d=8: recompute bucket/sign per index from first principles.
    #[test]
    fn projection_matches_manual_accumulation() {
        let x = SparseVec::from_pairs(1 << 18, vec![(11, 0.5), (4242, -1.5), (170_001, 2.0)]);
        let seed = 0xBEEF;
        let got = signed_hash_project(&x, 8, seed);

        let mut want = [0.0f64; 8];
        for (i, v) in [(11u64, 0.5), (4242, -1.5), (170_001, 2.0)] {
            let h = mix64(mix64(seed) ^ i);
            let bucket = (h & 7) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            want[bucket] += sign * v;
        }
        for j in 0..8 {
            assert!((got[j] - want[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_is_linear() {
        let a = SparseVec::from_pairs(4096, vec![(1, 1.0), (99, -2.0), (700, 0.25)]);
        let b = SparseVec::from_pairs(4096, vec![(99, 2.0), (701, 1.5), (4095, -0.75)]);
        let sum = a.add(&b).unwrap();
        let pa = signed_hash_project(&a, 16, 7);
        let pb = signed_hash_project(&b, 16, 7);
        let ps = signed_hash_project(&sum, 16, 7);
        for j in 0..16 {
            assert!((ps[j] - (pa[j] + pb[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_dense_projection_agree() {
        let x = SparseVec::from_pairs(1 << 18, vec![(3, 1.0), (77, -0.5), (250_000, 0.125)]);
        let dense = signed_hash_project(&x, 64, 99);
        let sparse = signed_hash_project_sparse(&x, 64, 99).to_dense();
        for j in 0..64 {
            assert!((dense[j] - sparse[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn from_pairs_merges_and_drops_cancellations() {
        let v = SparseVec::from_pairs(10, vec![(4, 1.0), (2, 0.5), (4, -1.0), (2, 0.25)]);
        assert_eq!(v.nnz(), 1);
        let (idx, val) = v.iter().next().unwrap();
        assert_eq!(idx, 2);
        assert!((val - 0.75).abs() < 1e-15);
    }
}
