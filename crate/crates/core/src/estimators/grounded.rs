//! Grounded families: an OBS baseline corrected in proxy space with EXP.
//!
//! All three variants share the outer form `clip(f_OBS(z) − α·correction(z))`
//! and differ in the correction class and how OBS re-enters:
//!
//! * **linear** — a single affine correction on raw ψ, fit by ridge on the
//!   EXP discrepancies `Δ_j = f_OBS(z_j) − Y_j` (mean-squared loss).
//! * **rich** — corrections `θᵀB(ψ̃) + c` on a standardized compression `ψ̃`
//!   with `B ∈ {id, poly2}`, fit by minimizing the summed squared
//!   discrepancy plus `τ‖θ‖²` (the ridge level grid is τ-denominated, so the
//!   objective is kept in sum units rather than mean units).
//! * **anchor** — keeps the rich correction direction `ĉ(z)` fixed and pools
//!   OBS and EXP only through two calibration scalars `(b, a)`, shrunk
//!   toward `(1, 1)`; on the OBS side the baseline enters through
//!   cross-fitted predictions so rows never score their own fit.

use crate::error::{Error, Result};
use crate::numerics::pca::ProjectionMap;
use crate::numerics::ridge::{ridge_fit_gram, GramAccumulator, LinearModel};
use crate::scm::ScmSample;
use std::sync::Arc;

use super::linear::{dense_unit_gram, mean_loss_head, outcome_at};
use super::model::{BasisKind, Family, RewardModel};
use super::proxy::ProxyMap;

/// The raw (unclipped) observational baseline regression `f_OBS`.
pub fn fit_obs_baseline(obs_rows: &[ScmSample], mode_idx: usize, penalty: f64) -> Result<LinearModel> {
    if obs_rows.len() < 2 {
        return Err(Error::Config(format!(
            "baseline fit needs at least 2 rows, got {}",
            obs_rows.len()
        )));
    }
    mean_loss_head(&dense_unit_gram(obs_rows, mode_idx)?, penalty)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::Config(format!("correction shrinkage α={alpha} must lie in [0,1]")));
    }
    Ok(())
}

/// Gram over correction features with the discrepancy target
/// `Δ = f_OBS(z) − y`, at unit row weights.
fn delta_gram(
    exp_rows: &[ScmSample],
    mode_idx: usize,
    baseline: &LinearModel,
    features: impl Fn(&ScmSample) -> Result<Vec<f64>>,
    dim: usize,
) -> Result<GramAccumulator> {
    let mut g = GramAccumulator::new(dim);
    for r in exp_rows {
        let delta = baseline.raw_sparse(&r.dense) - outcome_at(r, mode_idx)?;
        g.add_dense_row(&features(r)?, delta, 1.0);
    }
    Ok(g)
}

/// Linear grounded fit at a fixed correction shrinkage α: ridge of the EXP
/// discrepancies on raw ψ under mean-squared loss.
pub fn fit_grounded_linear_at(
    baseline: &LinearModel,
    exp_rows: &[ScmSample],
    mode_idx: usize,
    proxy: &Arc<ProxyMap>,
    alpha: f64,
    penalty: f64,
) -> Result<RewardModel> {
    check_alpha(alpha)?;
    if exp_rows.len() < 2 {
        return Err(Error::Config(format!(
            "grounded correction needs at least 2 EXP rows, got {}",
            exp_rows.len()
        )));
    }
    let g = delta_gram(
        exp_rows,
        mode_idx,
        baseline,
        |r| Ok(proxy.apply(&r.dense)?.to_vec()),
        proxy.dim_psi(),
    )?;
    let head = mean_loss_head(&g, penalty)?;
    let mut model = RewardModel::plain(Family::GroundedLin, head);
    model.baseline = Some(baseline.clone());
    model.alpha_corr = Some(alpha);
    model.proxy = Some(Arc::clone(proxy));
    Ok(model)
}

/// Rich grounded fit at fixed `(B, τ, α)`: ridge of the EXP discrepancies on
/// basis-expanded compressed proxy features, in sum units (`Σ(...)² + τ‖θ‖²`).
pub fn fit_grounded_rich_at(
    baseline: &LinearModel,
    exp_rows: &[ScmSample],
    mode_idx: usize,
    proxy: &Arc<ProxyMap>,
    compression: &Arc<ProjectionMap>,
    basis: BasisKind,
    tau: f64,
    alpha: f64,
) -> Result<RewardModel> {
    check_alpha(alpha)?;
    if exp_rows.len() < 2 {
        return Err(Error::Config(format!(
            "grounded correction needs at least 2 EXP rows, got {}",
            exp_rows.len()
        )));
    }
    let dim = basis.expanded_dim(compression.dim_out());
    let g = delta_gram(
        exp_rows,
        mode_idx,
        baseline,
        |r| {
            let psi = proxy.apply(&r.dense)?;
            let coords = compression.project(psi.view())?;
            Ok(basis.expand(coords.as_slice().expect("contiguous coords")))
        },
        dim,
    )?;
    let head = ridge_fit_gram(&g, tau, true)?;
    let mut model = RewardModel::plain(Family::GroundedRich, head);
    model.baseline = Some(baseline.clone());
    model.basis = Some(basis);
    model.alpha_corr = Some(alpha);
    model.proxy = Some(Arc::clone(proxy));
    model.compression = Some(Arc::clone(compression));
    Ok(model)
}

/// Cross-fitted baseline predictions on the OBS rows themselves: row `i` is
/// scored by the baseline refit without its stripe (`i mod folds`).
pub fn cross_fit_baseline_predictions(
    obs_rows: &[ScmSample],
    mode_idx: usize,
    penalty: f64,
    folds: usize,
) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::Config(format!("cross-fitting needs ≥ 2 folds, got {folds}")));
    }
    if obs_rows.len() < 2 * folds {
        return Err(Error::Config(format!(
            "cross-fitting {folds} folds needs ≥ {} rows, got {}",
            2 * folds,
            obs_rows.len()
        )));
    }
    let dim = obs_rows[0].dense.dim();
    let mut fold_grams = vec![GramAccumulator::new(dim); folds];
    for (i, r) in obs_rows.iter().enumerate() {
        if r.dense.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: r.dense.dim() });
        }
        fold_grams[i % folds].add_row(&r.dense, outcome_at(r, mode_idx)?, 1.0);
    }
    let mut total = GramAccumulator::new(dim);
    for g in &fold_grams {
        total.merge(g);
    }
    let mut heads = Vec::with_capacity(folds);
    for g in &fold_grams {
        let mut train = total.clone();
        train.subtract(g);
        heads.push(mean_loss_head(&train, penalty)?);
    }
    Ok(obs_rows
        .iter()
        .enumerate()
        .map(|(i, r)| heads[i % folds].raw_sparse(&r.dense))
        .collect())
}

/// Running 2×2 normal equations in the anchor calibration pair `(b, a)`,
/// seeded with the shrinkage-to-unity penalties.
struct AnchorSystem {
    m11: f64,
    m12: f64,
    m22: f64,
    v1: f64,
    v2: f64,
}

impl AnchorSystem {
    fn new(rho_b: f64, rho_alpha: f64) -> Self {
        AnchorSystem { m11: rho_b, m12: 0.0, m22: rho_alpha, v1: rho_b, v2: rho_alpha }
    }

    fn add(&mut self, w: f64, f: f64, c: f64, y: f64) {
        self.m11 += w * f * f;
        self.m12 -= w * f * c;
        self.m22 += w * c * c;
        self.v1 += w * y * f;
        self.v2 -= w * y * c;
    }

    fn solve(&self) -> Result<(f64, f64)> {
        let det = self.m11 * self.m22 - self.m12 * self.m12;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::RankDeficientDesign);
        }
        Ok((
            (self.v1 * self.m22 - self.v2 * self.m12) / det,
            (self.m11 * self.v2 - self.m12 * self.v1) / det,
        ))
    }
}

fn anchor_validate(
    rich: &RewardModel,
    n_obs: usize,
    obs_cf: &[f64],
    n_exp: usize,
    lambda: f64,
) -> Result<()> {
    if rich.family != Family::GroundedRich {
        return Err(Error::Config(format!(
            "anchor expects a rich grounded correction, got {}",
            rich.family
        )));
    }
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::Config(format!("pooling weight λ={lambda} must lie in [0,1]")));
    }
    if obs_cf.len() != n_obs {
        return Err(Error::DimensionMismatch { expected: n_obs, got: obs_cf.len() });
    }
    if lambda > 0.0 && n_obs == 0 {
        return Err(Error::Config("anchored pooling weights an empty OBS side".into()));
    }
    if lambda < 1.0 && n_exp == 0 {
        return Err(Error::Config("anchored pooling weights an empty EXP side".into()));
    }
    Ok(())
}

/// Add the EXP term of the anchored objective to the system and return the
/// finished model once both sides are in.
fn anchor_finish(
    rich: &RewardModel,
    mut sys: AnchorSystem,
    exp_rows: &[ScmSample],
    mode_idx: usize,
    lambda: f64,
) -> Result<RewardModel> {
    let baseline = rich
        .baseline
        .as_ref()
        .ok_or_else(|| Error::Config("rich correction is missing its baseline".into()))?;
    if lambda < 1.0 {
        let w = (1.0 - lambda) / exp_rows.len() as f64;
        for r in exp_rows {
            sys.add(
                w,
                baseline.raw_sparse(&r.dense),
                rich.correction_value(&r.dense)?,
                outcome_at(r, mode_idx)?,
            );
        }
    }
    let (b_cal, a_cal) = sys.solve()?;
    let mut model = rich.clone();
    model.family = Family::GroundedAnchor;
    model.alpha_corr = None;
    model.lambda_pool = Some(lambda);
    model.anchor = Some((b_cal, a_cal));
    Ok(model)
}

/// Anchored pooling at a fixed pooling weight λ: keep the rich correction
/// direction `ĉ(z)` from `rich` and solve the two-coefficient objective
///
/// ```text
///   λ·mean_OBS (Y − (b·f_cf − a·ĉ))² + (1−λ)·mean_EXP (Y − (b·f − a·ĉ))²
///     + ρ_b (b−1)² + ρ_a (a−1)²
/// ```
///
/// in closed form (a 2×2 linear system).
#[allow(clippy::too_many_arguments)]
pub fn fit_grounded_anchor_at(
    rich: &RewardModel,
    obs_rows: &[ScmSample],
    obs_cf: &[f64],
    exp_rows: &[ScmSample],
    mode_idx: usize,
    lambda: f64,
    rho_b: f64,
    rho_alpha: f64,
) -> Result<RewardModel> {
    anchor_validate(rich, obs_rows.len(), obs_cf, exp_rows.len(), lambda)?;
    let mut sys = AnchorSystem::new(rho_b, rho_alpha);
    if lambda > 0.0 {
        let w = lambda / obs_rows.len() as f64;
        for (r, &f_cf) in obs_rows.iter().zip(obs_cf) {
            sys.add(w, f_cf, rich.correction_value(&r.dense)?, outcome_at(r, mode_idx)?);
        }
    }
    anchor_finish(rich, sys, exp_rows, mode_idx, lambda)
}

/// [`fit_grounded_anchor_at`] with the observational side already reduced to
/// per-row `(outcome, cross-fitted baseline, compressed proxy coordinates)`.
/// Hyperparameter sweeps refit the anchor many times over one OBS log, and
/// re-projecting every row on every candidate is what this variant avoids.
#[allow(clippy::too_many_arguments)]
pub fn fit_grounded_anchor_cached(
    rich: &RewardModel,
    obs_y: &[f64],
    obs_cf: &[f64],
    obs_coords: &[Vec<f64>],
    exp_rows: &[ScmSample],
    mode_idx: usize,
    lambda: f64,
    rho_b: f64,
    rho_alpha: f64,
) -> Result<RewardModel> {
    anchor_validate(rich, obs_coords.len(), obs_cf, exp_rows.len(), lambda)?;
    if obs_y.len() != obs_coords.len() {
        return Err(Error::DimensionMismatch { expected: obs_coords.len(), got: obs_y.len() });
    }
    let mut sys = AnchorSystem::new(rho_b, rho_alpha);
    if lambda > 0.0 {
        let w = lambda / obs_coords.len() as f64;
        for ((coords, &f_cf), &y) in obs_coords.iter().zip(obs_cf).zip(obs_y) {
            sys.add(w, f_cf, rich.correction_from_coords(coords), y);
        }
    }
    anchor_finish(rich, sys, exp_rows, mode_idx, lambda)
}
