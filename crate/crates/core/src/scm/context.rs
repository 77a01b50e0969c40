//! Context sampling: token draws, the public context sketch, and segments.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::numerics::mix64;
use crate::scm::params::GeneratorParams;

/// One sampled context: raw tokens plus the low-dimensional public sketch
/// that routing and estimation are allowed to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub id: u64,
    pub tokens: Vec<u32>,
    /// Public sketch of the token counts.
    pub psi_x: Array1<f64>,
    /// User segment (relevant to rubric/coding preference mixing).
    pub segment: usize,
}

/// Signed count-sketch of a token multiset. Each distinct token contributes
/// its count times a fixed ±1 pattern per coordinate; the result is scaled by
/// the count vector's L2 norm so coordinates are unit-variance under random
/// signs regardless of context length.
pub fn sketch_tokens(tokens: &[u32], dim: usize, sketch_seed: u64) -> Array1<f64> {
    debug_assert!(dim <= 64, "sketch signs come from a single 64-bit hash");
    let mut counts: Vec<(u32, f64)> = Vec::with_capacity(tokens.len());
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i];
        let mut c = 0.0;
        while i < sorted.len() && sorted[i] == t {
            c += 1.0;
            i += 1;
        }
        counts.push((t, c));
    }
    let norm: f64 = counts.iter().map(|&(_, c)| c * c).sum::<f64>().sqrt();
    let mut out = Array1::zeros(dim);
    if norm == 0.0 {
        return out;
    }
    for &(t, c) in &counts {
        let bits = mix64(mix64(sketch_seed) ^ u64::from(t));
        for j in 0..dim {
            let sign = if (bits >> j) & 1 == 1 { 1.0 } else { -1.0 };
            out[j] += sign * c;
        }
    }
    out / norm
}

pub fn sample_context<R: Rng>(params: &GeneratorParams, id: u64, rng: &mut R) -> Context {
    let c = &params.config;
    let len = rng.random_range(c.context_len_min..=c.context_len_max);
    let zipf = Zipf::new(c.vocab_size as f64, c.zipf_s).expect("valid zipf");
    let tokens: Vec<u32> = (0..len).map(|_| zipf.sample(rng) as u32 - 1).collect();
    let psi_x = sketch_tokens(&tokens, c.psi_x_dim, params.sketch_seed);
    let segment = (rng.random::<u64>() % c.n_segments as u64) as usize;
    Context { id, tokens, psi_x, segment }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::params::GeneratorConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn test_params() -> GeneratorParams {
        GeneratorParams::realize(GeneratorConfig::default(), 42).unwrap()
    }

    #[test]
    fn context_draws_are_deterministic() {
        let p = test_params();
        let mut r1 = ChaCha12Rng::seed_from_u64(5);
        let mut r2 = ChaCha12Rng::seed_from_u64(5);
        let a = sample_context(&p, 0, &mut r1);
        let b = sample_context(&p, 0, &mut r2);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.psi_x, b.psi_x);
        assert_eq!(a.segment, b.segment);
    }

    #[test]
    fn token_ids_and_length_respect_config() {
        let p = test_params();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for i in 0..200 {
            let ctx = sample_context(&p, i, &mut rng);
            assert!(ctx.tokens.len() >= p.config.context_len_min);
            assert!(ctx.tokens.len() <= p.config.context_len_max);
            assert!(ctx.tokens.iter().all(|&t| (t as usize) < p.config.vocab_size));
            assert!(ctx.segment < p.config.n_segments);
        }
    }

    #[test]
    fn zipf_draws_are_head_heavy() {
        // With s = 1.1 over 5000 tokens, the top-10 mass is about 37%; check
        // the empirical share lands in a generous band around it.
        let p = test_params();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut total = 0usize;
        let mut head = 0usize;
        for i in 0..400 {
            let ctx = sample_context(&p, i, &mut rng);
            total += ctx.tokens.len();
            head += ctx.tokens.iter().filter(|&&t| t < 10).count();
        }
        let share = head as f64 / total as f64;
        assert!(share > 0.25 && share < 0.50, "head share {share}");
    }

    #[test]
    fn segments_are_uniform() {
        let p = test_params();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 10_000u64;
        let mut counts = [0usize; 4];
        for i in 0..n {
            counts[sample_context(&p, i, &mut rng).segment] += 1;
        }
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        for (t, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 3.0 * sd, "segment {t}: {freq}");
        }
    }

    #[test]
    fn sketch_matches_hand_computation() {
        // Two distinct tokens, one repeated: psi = (s_a * 2 + s_b) / sqrt(5).
        let seed = 0xDEAD_BEEF;
        let dim = 8;
        let got = sketch_tokens(&[7, 7, 30], dim, seed);
        let sign = |t: u32, j: usize| -> f64 {
            let bits = mix64(mix64(seed) ^ u64::from(t));
            if (bits >> j) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        };
        for j in 0..dim {
            let want = (2.0 * sign(7, j) + sign(30, j)) / 5f64.sqrt();
            assert!((got[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn sketch_is_order_invariant_and_unit_scale() {
        let a = sketch_tokens(&[1, 2, 3, 2], 16, 99);
        let b = sketch_tokens(&[2, 3, 2, 1], 16, 99);
        assert_eq!(a, b);
        // One distinct token: coordinates are exactly ±1.
        let single = sketch_tokens(&[400, 400, 400], 16, 99);
        assert!(single.iter().all(|v| (v.abs() - 1.0).abs() < 1e-15));
    }
}
