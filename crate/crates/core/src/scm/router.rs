//! Logging policies: how the observational log picks an agent per context.
//!
//! Both routers expose the exact choice distribution alongside the sampler so
//! tests can compare draw frequencies against closed-form probabilities.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scm::params::GeneratorParams;

/// Which logging policy generated the observational data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    /// Latent-shortlist mixture: with probability beta, pick uniformly from
    /// the top-k agents by latent affinity; otherwise route on the sketch.
    Mixture,
    /// Softmax over sketch logits tilted by a segment affinity bonus.
    Softmax,
}

impl RouterKind {
    pub fn label(self) -> &'static str {
        match self {
            RouterKind::Mixture => "mixture",
            RouterKind::Softmax => "softmax",
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - m).exp());
    let s = out.sum();
    out /= s;
    out
}

/// Context-only routing logits: sketch affinity minus serving cost.
pub fn context_logits(params: &GeneratorParams, psi_x: &Array1<f64>) -> Array1<f64> {
    let mut logits = params.theta_x.dot(psi_x);
    logits.scaled_add(-params.config.kappa, &params.costs);
    logits
}

/// Agents on the latent shortlist: top-k by latent affinity, ties broken
/// toward the smaller agent id.
pub fn latent_shortlist(params: &GeneratorParams, u: &Array1<f64>) -> Vec<usize> {
    let scores = params.theta_u.dot(u);
    let mut order: Vec<usize> = (0..params.n_agents()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut short = order[..params.config.shortlist_k].to_vec();
    short.sort_unstable();
    short
}

/// Exact choice distribution of the mixture router given (sketch, latent).
pub fn mixture_probs(params: &GeneratorParams, beta: f64, psi_x: &Array1<f64>, u: &Array1<f64>) -> Array1<f64> {
    let mut probs = softmax(&context_logits(params, psi_x)) * (1.0 - beta);
    let short = latent_shortlist(params, u);
    let w = beta / short.len() as f64;
    for a in short {
        probs[a] += w;
    }
    probs
}

/// Exact choice distribution of the softmax router given (sketch, segment).
pub fn softmax_probs(params: &GeneratorParams, beta: f64, psi_x: &Array1<f64>, segment: usize) -> Array1<f64> {
    let n = params.n_agents();
    let mut logits = context_logits(params, psi_x);
    for a in 0..n {
        logits[a] += beta * params.theta_u[[a, segment]];
    }
    let eps = params.config.eps_floor;
    softmax(&logits) * (1.0 - eps) + eps / n as f64
}

/// Draw from a probability vector by inverse CDF; the final bucket absorbs
/// rounding slack.
pub fn sample_categorical<R: Rng>(probs: &Array1<f64>, rng: &mut R) -> usize {
    let v: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if v < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Sample the mixture router. Consumes one uniform for the branch coin, then
/// one uniform for the chosen branch.
pub fn route_mixture<R: Rng>(
    params: &GeneratorParams,
    beta: f64,
    psi_x: &Array1<f64>,
    u: &Array1<f64>,
    rng: &mut R,
) -> usize {
    let coin: f64 = rng.random();
    if coin < beta {
        let short = latent_shortlist(params, u);
        let pick = (rng.random::<u64>() % short.len() as u64) as usize;
        short[pick]
    } else {
        let probs = softmax(&context_logits(params, psi_x));
        sample_categorical(&probs, rng)
    }
}

/// Sample the softmax router. Consumes one uniform.
pub fn route_softmax<R: Rng>(
    params: &GeneratorParams,
    beta: f64,
    psi_x: &Array1<f64>,
    segment: usize,
    rng: &mut R,
) -> usize {
    let probs = softmax_probs(params, beta, psi_x, segment);
    sample_categorical(&probs, rng)
}
