//! Generator configuration and its realized parameter set.
//!
//! [`GeneratorConfig`] holds the user-facing knobs (sizes, noise scales,
//! magnitudes); [`GeneratorParams`] is the concrete draw of every fixed
//! quantity — outcome heads, routing parameters, per-agent styles — realized
//! once per run seed and shared by all cells and replicates, so that
//! replicate-to-replicate variation comes only from data sampling.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::mix_fields;

/// Token-id layout: context vocabulary, per-agent style tokens, and draw
/// noise tokens occupy disjoint id ranges.
pub const STYLE_TOKEN_BASE: u32 = 1_000_000;
pub const NOISE_TOKEN_BASE: u32 = 2_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_agents: usize,
    pub vocab_size: usize,
    pub noise_vocab: usize,
    pub style_tokens_per_agent: usize,
    pub noise_tokens_per_draw: usize,
    /// Zipf exponent for context token draws.
    pub zipf_s: f64,
    pub context_len_min: usize,
    pub context_len_max: usize,
    /// Hashed feature space width (power of two).
    pub phi_dim: usize,
    /// Hidden outcome-feature dimension.
    pub phi_star_dim: usize,
    /// Width of the signed projection regressions operate on.
    pub dense_dim: usize,
    /// Context sketch dimension.
    pub psi_x_dim: usize,
    /// Latent user-state dimension (also the number of user segments).
    pub d_u: usize,
    pub n_segments: usize,
    pub k_aux: usize,
    pub sigma_y: f64,
    pub sigma_z: f64,
    /// Conditional variance of each latent coordinate around its mean.
    pub u_cond_var: f64,
    pub w_star_norm: f64,
    pub lambda_norm: f64,
    pub t_scale: f64,
    pub theta_x_scale: f64,
    pub theta_u_scale: f64,
    pub kappa: f64,
    pub aux_head_norm: f64,
    pub rubric_head_norm: f64,
    pub coding_head_norm: f64,
    pub keep_rate_min: f64,
    pub keep_rate_max: f64,
    pub shortlist_k: usize,
    pub eps_floor: f64,
    /// Simulator draws per (context, agent) when building ground truth.
    pub b_true: usize,
    /// Held-out contexts for the regret grid.
    pub n_eval: usize,
    /// Held-out contexts for reference per-agent values.
    pub n_true: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_agents: 20,
            vocab_size: 5000,
            noise_vocab: 500,
            style_tokens_per_agent: 10,
            noise_tokens_per_draw: 5,
            zipf_s: 1.1,
            context_len_min: 40,
            context_len_max: 400,
            phi_dim: 1 << 18,
            phi_star_dim: 8,
            dense_dim: 512,
            psi_x_dim: 50,
            d_u: 4,
            n_segments: 4,
            k_aux: 6,
            sigma_y: 0.25,
            sigma_z: 0.25,
            u_cond_var: 0.5,
            w_star_norm: 4.0,
            lambda_norm: 1.5,
            t_scale: 0.7,
            theta_x_scale: 1.0,
            theta_u_scale: 1.5,
            kappa: 1.0,
            aux_head_norm: 3.0,
            rubric_head_norm: 2.5,
            coding_head_norm: 2.5,
            keep_rate_min: 0.3,
            keep_rate_max: 0.9,
            shortlist_k: 5,
            eps_floor: 0.05,
            b_true: 256,
            n_eval: 100,
            n_true: 100,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::Config;
        if self.n_agents < 2 {
            return Err(Config("need at least two agents".into()));
        }
        if !self.phi_dim.is_power_of_two() {
            return Err(Config("phi_dim must be a power of two".into()));
        }
        if self.dense_dim < self.phi_star_dim || self.dense_dim > self.phi_dim {
            return Err(Config("dense_dim out of range".into()));
        }
        if self.context_len_min == 0 || self.context_len_min > self.context_len_max {
            return Err(Config("bad context length range".into()));
        }
        if !(0.0 < self.keep_rate_min && self.keep_rate_min <= self.keep_rate_max && self.keep_rate_max <= 1.0) {
            return Err(Config("keep rates must satisfy 0 < min <= max <= 1".into()));
        }
        if self.shortlist_k == 0 || self.shortlist_k > self.n_agents {
            return Err(Config("shortlist size out of range".into()));
        }
        if !(0.0..1.0).contains(&self.eps_floor) {
            return Err(Config("eps_floor must be in [0,1)".into()));
        }
        if self.d_u != self.n_segments {
            // theta_u doubles as the segment-affinity table, so the two
            // dimensions are tied together in this construction.
            return Err(Config("d_u must equal n_segments".into()));
        }
        if self.sigma_y < 0.0 || self.sigma_z < 0.0 || self.u_cond_var < 0.0 {
            return Err(Config("noise scales must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Rubric segment weights: segment t puts 0.7 on rubric dimension t and 0.1
/// on the rest, so segments disagree about which quality axis matters.
fn rubric_segment_weights(n_segments: usize) -> Array2<f64> {
    let mut w = Array2::from_elem((n_segments, 4), 0.1);
    for t in 0..n_segments {
        w[[t, t % 4]] = 0.7;
    }
    w
}

/// Coding user types: (fix-success weight, three patch-quality weights).
/// Types differ both in how much they care about the fix bit and in which
/// quality component dominates.
fn coding_user_weights() -> Array2<f64> {
    ndarray::arr2(&[
        [0.6, 0.7, 0.15, 0.15],
        [0.5, 0.15, 0.7, 0.15],
        [0.4, 0.15, 0.15, 0.7],
        [0.7, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ])
}

/// Every fixed draw of the generator. One realization per run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    /// Hidden-feature projection seed (never exposed to estimators).
    pub hidden_seed: u64,
    /// Densification projection seed (part of the estimation interface).
    pub dense_seed: u64,
    /// Context-sketch seed.
    pub sketch_seed: u64,
    /// Outcome head on hidden features.
    pub w_star: Array1<f64>,
    /// Latent-state coefficient in the scalar outcome.
    pub lambda_latent: Array1<f64>,
    /// Latent-mean map: u | x ~ N(T psi_x, u_cond_var I).
    pub t_map: Array2<f64>,
    /// Context-routing parameters per agent (rows).
    pub theta_x: Array2<f64>,
    /// Latent-routing / segment-affinity parameters per agent (rows).
    pub theta_u: Array2<f64>,
    /// Per-agent serving cost entering the context router.
    pub costs: Array1<f64>,
    /// Per-agent probability of keeping each context token in the mediator.
    pub keep_rates: Array1<f64>,
    /// Aux-label heads on hidden features (rows).
    pub aux_heads: Array2<f64>,
    /// Rubric component heads (4 rows) and the claim-count head.
    pub rubric_heads: Array2<f64>,
    pub rubric_count_head: Array1<f64>,
    /// Rubric segment weight rows (simplex each).
    pub segment_weights: Array2<f64>,
    /// Coding component heads: row 0 is the fix-success head, rows 1..4 the
    /// patch-quality heads.
    pub coding_heads: Array2<f64>,
    /// Coding user-type weight rows.
    pub user_weights: Array2<f64>,
}

fn draw_vec(rng: &mut ChaCha12Rng, dim: usize, norm: f64) -> Array1<f64> {
    let gauss: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut v = Array1::from_iter((0..dim).map(|_| gauss.sample(rng)));
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v *= norm / n;
    }
    v
}

fn draw_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize, entry_sd: f64) -> Array2<f64> {
    let gauss = Normal::new(0.0, entry_sd).unwrap();
    Array2::from_shape_fn((rows, cols), |_| gauss.sample(rng))
}

/// Project `v` onto the row span of `basis` (rows assumed orthonormal).
fn project_onto(v: &Array1<f64>, basis: &[Array1<f64>]) -> Array1<f64> {
    let mut out = Array1::zeros(v.len());
    for b in basis {
        let c = v.dot(b);
        out = out + b * c;
    }
    out
}

fn orthonormal_rows(m: &Array2<f64>) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for row in m.rows() {
        let mut v = row.to_owned();
        let p = project_onto(&v, &basis);
        v = v - p;
        let n = v.dot(&v).sqrt();
        if n > 1e-10 {
            basis.push(v / n);
        }
    }
    basis
}

impl GeneratorParams {
    /// Realize all fixed parameters from a generator seed.
    pub fn realize(config: GeneratorConfig, gen_seed: u64) -> crate::Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[gen_seed, 0x0001_5EED_FACE]));
        let c = &config;

        let w_star = draw_vec(&mut rng, c.phi_star_dim, c.w_star_norm);
        let lambda_latent = draw_vec(&mut rng, c.d_u, c.lambda_norm);
        let t_map = draw_matrix(&mut rng, c.d_u, c.psi_x_dim, c.t_scale / (c.psi_x_dim as f64).sqrt());
        let theta_x = draw_matrix(&mut rng, c.n_agents, c.psi_x_dim, c.theta_x_scale / (c.psi_x_dim as f64).sqrt());
        let theta_u = draw_matrix(&mut rng, c.n_agents, c.d_u, c.theta_u_scale / (c.d_u as f64).sqrt());
        let costs = Array1::from_iter((0..c.n_agents).map(|_| rng.random::<f64>()));
        let keep_rates = Array1::from_iter(
            (0..c.n_agents).map(|_| c.keep_rate_min + (c.keep_rate_max - c.keep_rate_min) * rng.random::<f64>()),
        );
        let aux_heads = {
            let mut m = Array2::zeros((c.k_aux, c.phi_star_dim));
            for k in 0..c.k_aux {
                m.row_mut(k).assign(&draw_vec(&mut rng, c.phi_star_dim, c.aux_head_norm));
            }
            m
        };
        let rubric_heads = {
            let mut m = Array2::zeros((4, c.phi_star_dim));
            for k in 0..4 {
                m.row_mut(k).assign(&draw_vec(&mut rng, c.phi_star_dim, c.rubric_head_norm));
            }
            m
        };
        let rubric_count_head = draw_vec(&mut rng, c.phi_star_dim, c.rubric_head_norm);

        // Coding heads are constructed relative to the aux span: the three
        // patch-quality heads live inside it (auxiliary signals can see
        // them), while the fix-success head is orthogonal to it (they
        // cannot). This is what makes the fix-weight knob trade proxy
        // fidelity against log fidelity.
        let aux_basis = orthonormal_rows(&aux_heads);
        let coding_heads = {
            let mut m = Array2::zeros((4, c.phi_star_dim));
            let raw_fix = draw_vec(&mut rng, c.phi_star_dim, 1.0);
            let mut fix = &raw_fix - &project_onto(&raw_fix, &aux_basis);
            let n = fix.dot(&fix).sqrt();
            if n > 1e-8 {
                fix *= c.coding_head_norm / n;
            }
            m.row_mut(0).assign(&fix);
            for k in 1..4 {
                let raw = draw_vec(&mut rng, c.phi_star_dim, 1.0);
                let mut inside = project_onto(&raw, &aux_basis);
                let n = inside.dot(&inside).sqrt();
                if n > 1e-8 {
                    inside *= c.coding_head_norm / n;
                }
                m.row_mut(k).assign(&inside);
            }
            m
        };

        let hidden_seed = rng.random::<u64>();
        let dense_seed = rng.random::<u64>();
        let sketch_seed = rng.random::<u64>();

        Ok(GeneratorParams {
            segment_weights: rubric_segment_weights(config.n_segments),
            user_weights: coding_user_weights(),
            config,
            hidden_seed,
            dense_seed,
            sketch_seed,
            w_star,
            lambda_latent,
            t_map,
            theta_x,
            theta_u,
            costs,
            keep_rates,
            aux_heads,
            rubric_heads,
            rubric_count_head,
            coding_heads,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn style_token(&self, agent: usize, j: usize) -> u32 {
        STYLE_TOKEN_BASE + (agent * self.config.style_tokens_per_agent + j) as u32
    }

    pub fn noise_token(&self, id: u32) -> u32 {
        NOISE_TOKEN_BASE + id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_is_deterministic_per_seed() {
        let a = GeneratorParams::realize(GeneratorConfig::default(), 7).unwrap();
        let b = GeneratorParams::realize(GeneratorConfig::default(), 7).unwrap();
        assert_eq!(a.w_star, b.w_star);
        assert_eq!(a.hidden_seed, b.hidden_seed);
        assert_eq!(a.keep_rates, b.keep_rates);
        let c = GeneratorParams::realize(GeneratorConfig::default(), 8).unwrap();
        assert_ne!(a.hidden_seed, c.hidden_seed);
    }

    #[test]
    fn coding_heads_respect_aux_alignment() {
        let p = GeneratorParams::realize(GeneratorConfig::default(), 3).unwrap();
        let basis = orthonormal_rows(&p.aux_heads);
        // Fix head orthogonal to the aux span.
        let fix = p.coding_heads.row(0).to_owned();
        let inside = project_onto(&fix, &basis);
        assert!(inside.dot(&inside).sqrt() < 1e-8 * fix.dot(&fix).sqrt().max(1e-12));
        // Patch heads inside the aux span.
        for k in 1..4 {
            let h = p.coding_heads.row(k).to_owned();
            let res = &h - &project_onto(&h, &basis);
            assert!(res.dot(&res).sqrt() < 1e-8);
        }
    }

    #[test]
    fn segment_weights_are_simplex_rows() {
        let p = GeneratorParams::realize(GeneratorConfig::default(), 11).unwrap();
        for row in p.segment_weights.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let mut c = GeneratorConfig::default();
        c.keep_rate_min = 0.0;
        assert!(c.validate().is_err());
        let mut c = GeneratorConfig::default();
        c.shortlist_k = 99;
        assert!(c.validate().is_err());
        let mut c = GeneratorConfig::default();
        c.phi_dim = 100;
        assert!(c.validate().is_err());
    }
}
