//! A fully enumerable binary instance of the data-generating design.
//!
//! Context, latent state, action, and mediator are all single bits, so every
//! conditional law is a small table and the identification claims can be
//! checked against closed forms:
//!
//! * the mediator-conditional reward recovered from randomized rows,
//!   `r*(x,m) = Σ_u P(u|x)·P(Y=1|x,m,u)`, and the per-action value
//!   `q(x,a) = Σ_m P(m|x,a)·r*(x,m)`;
//! * the confounded analog `E[Y|x,m,OBS]`, which reweights the latent state
//!   by how strongly the logging policy's action choice leaks into the
//!   mediator. At confounding weight β=0 the posterior equals the prior and
//!   the two coincide exactly; at large β they separate.
//!
//! The sampled plug-in estimator mirrors what a practitioner could do with
//! infinite stratification: average outcomes within each (x,m) stratum of
//! the log and recombine with the known mediator law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// All conditional laws of the binary instance.
#[derive(Debug, Clone)]
pub struct DiscreteScm {
    /// P(X=1).
    pub p_x1: f64,
    /// P(U=1 | x), indexed by x.
    pub p_u1: [f64; 2],
    /// Context policy P(A=1 | x), indexed by x.
    pub pi_x_a1: [f64; 2],
    /// Latent policy match rate: P(A=u | u).
    pub pi_u_match: f64,
    /// Mediator law P(M=1 | x, a), indexed [x][a].
    pub p_m1: [[f64; 2]; 2],
    /// Outcome law P(Y=1 | x, m, u), indexed [x][m][u].
    pub p_y1: [[[f64; 2]; 2]; 2],
}

/// One logged row.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteRow {
    pub x: usize,
    pub a: usize,
    pub m: usize,
    pub y: f64,
}

/// A stratified plug-in estimate of one q(x,a) with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct PlugIn {
    pub value: f64,
    pub se: f64,
}

impl DiscreteScm {
    /// The instance used by the identification checks: a latent state that
    /// both steers actions (at high β) and strongly shifts outcomes.
    pub fn canonical() -> Self {
        DiscreteScm {
            p_x1: 0.5,
            p_u1: [0.2, 0.7],
            pi_x_a1: [0.4, 0.6],
            pi_u_match: 0.9,
            p_m1: [[0.3, 0.7], [0.6, 0.2]],
            p_y1: [
                [[0.15, 0.75], [0.30, 0.90]],
                [[0.20, 0.70], [0.40, 0.95]],
            ],
        }
    }

    /// Logging policy P(a | x, u) at confounding weight β.
    pub fn router(&self, beta: f64, x: usize, u: usize) -> [f64; 2] {
        let ctx = [1.0 - self.pi_x_a1[x], self.pi_x_a1[x]];
        let mut lat = [1.0 - self.pi_u_match; 2];
        lat[u] = self.pi_u_match;
        [
            (1.0 - beta) * ctx[0] + beta * lat[0],
            (1.0 - beta) * ctx[1] + beta * lat[1],
        ]
    }

    /// Randomized-arm conditional reward r*(x,m): under uniform actions the
    /// latent state is independent of the mediator given the context.
    pub fn r_star(&self, x: usize, m: usize) -> f64 {
        let pu1 = self.p_u1[x];
        (1.0 - pu1) * self.p_y1[x][m][0] + pu1 * self.p_y1[x][m][1]
    }

    /// Per-action value q(x,a) = Σ_m P(m|x,a)·r*(x,m).
    pub fn q(&self, x: usize, a: usize) -> f64 {
        let pm1 = self.p_m1[x][a];
        (1.0 - pm1) * self.r_star(x, 0) + pm1 * self.r_star(x, 1)
    }

    /// Marginal value μ(a) over the context law.
    pub fn mu(&self, a: usize) -> f64 {
        (1.0 - self.p_x1) * self.q(0, a) + self.p_x1 * self.q(1, a)
    }

    /// Posterior P(U=1 | x, m) under the β-confounded log: the latent state
    /// tilts action choice, and the action leaks into the mediator.
    pub fn obs_posterior_u1(&self, beta: f64, x: usize, m: usize) -> f64 {
        let mut joint = [0.0f64; 2];
        for u in 0..2 {
            let pu = if u == 1 { self.p_u1[x] } else { 1.0 - self.p_u1[x] };
            let pa = self.router(beta, x, u);
            let pm: f64 = (0..2)
                .map(|a| {
                    let pm1 = self.p_m1[x][a];
                    pa[a] * if m == 1 { pm1 } else { 1.0 - pm1 }
                })
                .sum();
            joint[u] = pu * pm;
        }
        joint[1] / (joint[0] + joint[1])
    }

    /// Confounded conditional mean E[Y | x, m, OBS] at confounding weight β.
    pub fn obs_conditional_mean(&self, beta: f64, x: usize, m: usize) -> f64 {
        let pu1 = self.obs_posterior_u1(beta, x, m);
        (1.0 - pu1) * self.p_y1[x][m][0] + pu1 * self.p_y1[x][m][1]
    }

    /// Draw `n` rows from the β-confounded log.
    pub fn sample_obs(&self, beta: f64, n: usize, seed: u64) -> Vec<DiscreteRow> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = usize::from(rng.random::<f64>() < self.p_x1);
                let u = usize::from(rng.random::<f64>() < self.p_u1[x]);
                let pa = self.router(beta, x, u);
                let a = usize::from(rng.random::<f64>() < pa[1]);
                let m = usize::from(rng.random::<f64>() < self.p_m1[x][a]);
                let py = self.p_y1[x][m][u];
                let y = f64::from(rng.random::<f64>() < py);
                DiscreteRow { x, a, m, y }
            })
            .collect()
    }

    /// Stratified plug-in estimate of q(x,a) from logged rows: outcome means
    /// per (x,m) stratum recombined with the known mediator law. Also returns
    /// the binomial standard error propagated through the recombination.
    pub fn plug_in_q(&self, rows: &[DiscreteRow], x: usize, a: usize) -> Result<PlugIn> {
        let mut count = [0usize; 2];
        let mut sum = [0.0f64; 2];
        for r in rows.iter().filter(|r| r.x == x) {
            count[r.m] += 1;
            sum[r.m] += r.y;
        }
        let mut value = 0.0;
        let mut var = 0.0;
        for m in 0..2 {
            if count[m] == 0 {
                return Err(Error::Config(format!("empty stratum (x={x}, m={m})")));
            }
            let n = count[m] as f64;
            let mean = sum[m] / n;
            let w = if m == 1 { self.p_m1[x][a] } else { 1.0 - self.p_m1[x][a] };
            value += w * mean;
            var += w * w * mean * (1.0 - mean) / n;
        }
        Ok(PlugIn { value, se: var.sqrt() })
    }
}
