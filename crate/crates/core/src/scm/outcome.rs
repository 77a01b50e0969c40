//! Outcome maps: how a response is scored, observed and in truth.
//!
//! Three families share the hidden response features `phi_star`:
//!
//! * **scalar** — noisy sigmoid of hidden quality plus a latent-state tilt;
//! * **rubric** — a weighted judge over four quality components, in a smooth
//!   variant and a thresholded "sharpened" variant with a claim penalty;
//! * **coding** — a user-type utility mixing fix success with patch quality.
//!
//! Rubric and coding scores depend on which user segment is being served;
//! the true reward integrates the segment out (fresh user per serve), while
//! observed outcomes use the logged segment — that gap is the confounding
//! channel for those modes.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expect_sigmoid_gaussian, sigmoid};
use crate::scm::params::GeneratorParams;

/// Sharpened-rubric shape constants: weight exponent, claim penalty scale,
/// acceptance threshold and threshold temperature.
pub const SHARP_GAMMA: f64 = 16.0;
pub const SHARP_CLAIM_PENALTY: f64 = 0.1;
pub const SHARP_THRESHOLD: f64 = 0.9;
pub const SHARP_TEMP: f64 = 0.02;
/// Claim counts are integers in `0..=CLAIM_MAX`.
pub const CLAIM_MAX: f64 = 20.0;

/// Which reward map scores responses in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardMode {
    Scalar,
    RubricSmooth,
    RubricSharp,
    Coding { alpha_fix: f64, omega_weak: f64 },
}

/// Reward maps grouped by which intermediate scores they share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeClass {
    Scalar,
    Rubric,
    Coding,
}

impl RewardMode {
    pub fn class(self) -> ModeClass {
        match self {
            RewardMode::Scalar => ModeClass::Scalar,
            RewardMode::RubricSmooth | RewardMode::RubricSharp => ModeClass::Rubric,
            RewardMode::Coding { .. } => ModeClass::Coding,
        }
    }

    /// Stable identifier used in file names and report rows.
    pub fn label(self) -> String {
        match self {
            RewardMode::Scalar => "scalar".into(),
            RewardMode::RubricSmooth => "rubric_smooth".into(),
            RewardMode::RubricSharp => "rubric_sharp".into(),
            RewardMode::Coding { alpha_fix, omega_weak } => {
                format!("coding_af{alpha_fix:.2}_ow{omega_weak:.2}")
            }
        }
    }
}

/// Judge component scores for a response.
pub fn rubric_scores(params: &GeneratorParams, phi_star: &Array1<f64>) -> Array1<f64> {
    params.rubric_heads.dot(phi_star).mapv(sigmoid)
}

/// Integer claim count in `0..=20`, increasing in response verbosity.
pub fn claim_count(params: &GeneratorParams, phi_star: &Array1<f64>) -> f64 {
    (CLAIM_MAX * sigmoid(params.rubric_count_head.dot(phi_star))).round()
}

/// Concentrate simplex weights on their largest entries.
pub fn sharpen_weights(weights: &Array1<f64>, gamma: f64) -> Array1<f64> {
    let powed = weights.mapv(|w| w.powf(gamma));
    let s = powed.sum();
    powed / s
}

fn check_simplex(weights: &Array1<f64>) -> Result<()> {
    if weights.iter().any(|&w| w < 0.0) || (weights.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights("judge weights"));
    }
    Ok(())
}

/// Smooth judge: plain weighted component average.
pub fn smooth_reward(scores: &Array1<f64>, weights: &Array1<f64>) -> Result<f64> {
    check_simplex(weights)?;
    Ok(scores.dot(weights))
}

/// Sharpened judge: weights are exponent-concentrated, unsupported claims
/// are penalized, and the result passes through a tight acceptance sigmoid.
pub fn sharp_reward(scores: &Array1<f64>, claims: f64, weights: &Array1<f64>) -> Result<f64> {
    check_simplex(weights)?;
    let concentrated = sharpen_weights(weights, SHARP_GAMMA);
    let base = scores.dot(&concentrated) - SHARP_CLAIM_PENALTY * claims / CLAIM_MAX;
    Ok(sigmoid((base.clamp(0.0, 1.0) - SHARP_THRESHOLD) / SHARP_TEMP))
}

/// Coding component scores: index 0 is fix success, 1..4 patch quality.
pub fn coding_scores(params: &GeneratorParams, phi_star: &Array1<f64>) -> Array1<f64> {
    params.coding_heads.dot(phi_star).mapv(sigmoid)
}

/// One user type's utility for a scored patch. `weights` is a user row
/// (fix weight followed by three patch-quality weights); `alpha_fix` scales
/// how much verified fix success pays, `omega_weak` how much the weakest
/// quality component dominates.
pub fn coding_utility(scores: &Array1<f64>, weights: &Array1<f64>, alpha_fix: f64, omega_weak: f64) -> Result<f64> {
    let w_fix = weights[0];
    let patch_total = weights[1] + weights[2] + weights[3];
    if weights.iter().any(|&w| w < 0.0) || patch_total <= 0.0 {
        return Err(Error::BadWeights("user-type weights"));
    }
    let mut avg = 0.0;
    let mut weakest = f64::INFINITY;
    for k in 1..4 {
        avg += weights[k] / patch_total * scores[k];
        weakest = weakest.min(scores[k]);
    }
    let quality = (1.0 - omega_weak) * avg + omega_weak * weakest;
    Ok(w_fix * alpha_fix * scores[0] + (1.0 - w_fix) * quality)
}

/// Scalar observed outcome: sigmoid of hidden quality, latent tilt and noise.
pub fn scalar_outcome<R: Rng>(params: &GeneratorParams, phi_star: &Array1<f64>, u: &Array1<f64>, rng: &mut R) -> f64 {
    let noise: f64 = StandardNormal.sample(rng);
    scalar_outcome_from_noise(params, phi_star, u, noise)
}

/// Scalar outcome with the standardized noise draw supplied by the caller.
/// Row samplers draw the noise themselves so the per-row stream layout does
/// not depend on which reward maps a cell tracks.
pub fn scalar_outcome_from_noise(params: &GeneratorParams, phi_star: &Array1<f64>, u: &Array1<f64>, eps: f64) -> f64 {
    sigmoid(params.w_star.dot(phi_star) + params.lambda_latent.dot(u) + params.config.sigma_y * eps)
}

/// Scalar true reward: the latent tilt and outcome noise integrate to a
/// Gaussian around the sketch-conditional mean, handled by quadrature.
pub fn scalar_true_reward(params: &GeneratorParams, phi_star: &Array1<f64>, psi_x: &Array1<f64>) -> f64 {
    let u_mean = params.t_map.dot(psi_x);
    let mean = params.w_star.dot(phi_star) + params.lambda_latent.dot(&u_mean);
    let lam_sq = params.lambda_latent.dot(&params.lambda_latent);
    let var = lam_sq * params.config.u_cond_var + params.config.sigma_y * params.config.sigma_y;
    expect_sigmoid_gaussian(mean, var).expect("finite outcome moments")
}

/// Auxiliary simulator-head labels (observational rows only).
pub fn aux_labels<R: Rng>(params: &GeneratorParams, phi_star: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    let noise = Normal::new(0.0, params.config.sigma_z).expect("valid sigma_z");
    params.aux_heads.dot(phi_star).mapv(|v| sigmoid(v + noise.sample(rng)))
}

/// Observed outcome for one response under one reward map, given the logged
/// latent state and segment. Only the scalar map consumes randomness.
pub fn observed_outcome<R: Rng>(
    mode: RewardMode,
    params: &GeneratorParams,
    phi_star: &Array1<f64>,
    u: &Array1<f64>,
    segment: usize,
    rng: &mut R,
) -> Result<f64> {
    match mode {
        RewardMode::Scalar => Ok(scalar_outcome(params, phi_star, u, rng)),
        RewardMode::RubricSmooth => {
            let s = rubric_scores(params, phi_star);
            smooth_reward(&s, &params.segment_weights.row(segment).to_owned())
        }
        RewardMode::RubricSharp => {
            let s = rubric_scores(params, phi_star);
            sharp_reward(&s, claim_count(params, phi_star), &params.segment_weights.row(segment).to_owned())
        }
        RewardMode::Coding { alpha_fix, omega_weak } => {
            let s = coding_scores(params, phi_star);
            coding_utility(&s, &params.user_weights.row(segment).to_owned(), alpha_fix, omega_weak)
        }
    }
}

/// True reward of a response: segment (or latent state) integrated out.
pub fn true_reward(mode: RewardMode, params: &GeneratorParams, phi_star: &Array1<f64>, psi_x: &Array1<f64>) -> Result<f64> {
    match mode {
        RewardMode::Scalar => Ok(scalar_true_reward(params, phi_star, psi_x)),
        RewardMode::RubricSmooth => {
            let s = rubric_scores(params, phi_star);
            average_over_rows(&params.segment_weights, |w| smooth_reward(&s, w))
        }
        RewardMode::RubricSharp => {
            let s = rubric_scores(params, phi_star);
            let claims = claim_count(params, phi_star);
            average_over_rows(&params.segment_weights, |w| sharp_reward(&s, claims, w))
        }
        RewardMode::Coding { alpha_fix, omega_weak } => {
            let s = coding_scores(params, phi_star);
            average_over_rows(&params.user_weights, |w| coding_utility(&s, w, alpha_fix, omega_weak))
        }
    }
}

fn average_over_rows(table: &ndarray::Array2<f64>, mut f: impl FnMut(&Array1<f64>) -> Result<f64>) -> Result<f64> {
    let n = table.nrows();
    let mut acc = 0.0;
    for row in table.rows() {
        acc += f(&row.to_owned())?;
    }
    Ok(acc / n as f64)
}
