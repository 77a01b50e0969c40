//! Single-regression families: EXP-Only, OBS-Only, Proxy-EXP, the pooled
//! two-source fit, and its residual variant.
//!
//! All of them are ridge regressions under mean-squared loss. Row weights
//! make the loss a per-source average: a source with `n` rows contributes
//! weight `1/n` per row, so the pooled objective
//! `(1−λ)·mean_EXP + λ·mean_OBS` is literally a weighted Gram merge and the
//! endpoints λ∈{0,1} coincide with the single-source fits by construction.

use crate::error::{Error, Result};
use crate::numerics::ridge::{ridge_fit_gram, GramAccumulator, LinearModel};
use crate::scm::ScmSample;
use std::sync::Arc;

use super::model::{Family, RewardModel};
use super::proxy::ProxyMap;

/// Outcome channel lookup with a clear error for a missing mode.
pub(crate) fn outcome_at(row: &ScmSample, mode_idx: usize) -> Result<f64> {
    row.outcomes.get(mode_idx).copied().ok_or_else(|| {
        Error::Config(format!(
            "row carries {} outcome channels, mode index {mode_idx} is out of range",
            row.outcomes.len()
        ))
    })
}

/// Unit-weight Gram over densified features for one outcome channel.
pub(crate) fn dense_unit_gram(rows: &[ScmSample], mode_idx: usize) -> Result<GramAccumulator> {
    let dim = rows.first().map(|r| r.dense.dim()).unwrap_or(0);
    let mut g = GramAccumulator::new(dim);
    for r in rows {
        if r.dense.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: r.dense.dim() });
        }
        g.add_row(&r.dense, outcome_at(r, mode_idx)?, 1.0);
    }
    Ok(g)
}

/// Unit-weight Gram over proxy features. When `residual_around` is given the
/// target is `y − f(z)` (raw baseline score), otherwise `y` itself.
pub(crate) fn psi_unit_gram(
    rows: &[ScmSample],
    mode_idx: usize,
    proxy: &ProxyMap,
    residual_around: Option<&LinearModel>,
) -> Result<GramAccumulator> {
    let mut g = GramAccumulator::new(proxy.dim_psi());
    for r in rows {
        let psi = proxy.apply(&r.dense)?;
        let mut y = outcome_at(r, mode_idx)?;
        if let Some(f) = residual_around {
            y -= f.raw_sparse(&r.dense);
        }
        g.add_dense_row(psi.as_slice().expect("contiguous ψ"), y, 1.0);
    }
    Ok(g)
}

/// Ridge under mean loss: scale a unit-weight Gram to row weights `1/n` and
/// add the penalty unscaled.
pub(crate) fn mean_loss_head(unit_gram: &GramAccumulator, penalty: f64) -> Result<LinearModel> {
    if unit_gram.rows == 0 {
        return Err(Error::Config("regression received no rows".into()));
    }
    ridge_fit_gram(&unit_gram.scaled(1.0 / unit_gram.rows as f64), penalty, true)
}

fn require_rows(rows: &[ScmSample], label: &str) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::Config(format!("{label} fit needs at least 2 rows, got {}", rows.len())));
    }
    Ok(())
}

/// Clipped ridge on densified features over the randomized sample alone.
pub fn fit_exp_only(exp_rows: &[ScmSample], mode_idx: usize, penalty: f64) -> Result<RewardModel> {
    require_rows(exp_rows, "EXP-only")?;
    let head = mean_loss_head(&dense_unit_gram(exp_rows, mode_idx)?, penalty)?;
    Ok(RewardModel::plain(Family::ExpOnly, head))
}

/// Clipped ridge on densified features over the observational log alone.
pub fn fit_obs_only(obs_rows: &[ScmSample], mode_idx: usize, penalty: f64) -> Result<RewardModel> {
    require_rows(obs_rows, "OBS-only")?;
    let head = mean_loss_head(&dense_unit_gram(obs_rows, mode_idx)?, penalty)?;
    Ok(RewardModel::plain(Family::ObsOnly, head))
}

/// Clipped ridge on the OBS-derived proxy features, fit with EXP labels.
pub fn fit_proxy_exp(
    exp_rows: &[ScmSample],
    mode_idx: usize,
    proxy: &Arc<ProxyMap>,
    penalty: f64,
) -> Result<RewardModel> {
    require_rows(exp_rows, "proxy-EXP")?;
    let head = mean_loss_head(&psi_unit_gram(exp_rows, mode_idx, proxy, None)?, penalty)?;
    let mut model = RewardModel::plain(Family::ProxyExp, head);
    model.proxy = Some(Arc::clone(proxy));
    Ok(model)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::Config(format!("pooling weight λ={lambda} must lie in [0,1]")));
    }
    Ok(())
}

/// Merge per-source unit Grams into the pooled objective
/// `λ·mean_OBS + (1−λ)·mean_EXP` and solve. Shared by the raw pooled family,
/// its residual variant, and the tuning folds (which pass subtracted Grams).
pub(crate) fn pooled_head(
    obs_unit: &GramAccumulator,
    exp_unit: &GramAccumulator,
    lambda: f64,
    penalty: f64,
) -> Result<LinearModel> {
    check_lambda(lambda)?;
    if obs_unit.rows == 0 && exp_unit.rows == 0 {
        return Err(Error::Config("pooled fit received no rows from either source".into()));
    }
    if lambda > 0.0 && obs_unit.rows == 0 {
        return Err(Error::Config(format!("pooling weight λ={lambda} > 0 with an empty OBS side")));
    }
    if lambda < 1.0 && exp_unit.rows == 0 {
        return Err(Error::Config(format!(
            "pooling weight λ={lambda} < 1 with an empty EXP side"
        )));
    }
    let dim = if obs_unit.rows > 0 { obs_unit.dim() } else { exp_unit.dim() };
    let mut g = GramAccumulator::new(dim);
    if lambda > 0.0 {
        g.merge(&obs_unit.scaled(lambda / obs_unit.rows as f64));
    }
    if lambda < 1.0 {
        g.merge(&exp_unit.scaled((1.0 - lambda) / exp_unit.rows as f64));
    }
    ridge_fit_gram(&g, penalty, true)
}

/// Pooled two-source ridge on densified features at a fixed pooling weight.
pub fn fit_cvci(
    obs_rows: &[ScmSample],
    exp_rows: &[ScmSample],
    mode_idx: usize,
    lambda: f64,
    penalty: f64,
) -> Result<RewardModel> {
    let head = pooled_head(
        &dense_unit_gram(obs_rows, mode_idx)?,
        &dense_unit_gram(exp_rows, mode_idx)?,
        lambda,
        penalty,
    )?;
    let mut model = RewardModel::plain(Family::Cvci, head);
    model.lambda_pool = Some(lambda);
    Ok(model)
}

/// Pooled ridge in proxy space on residuals around the OBS baseline, at a
/// fixed pooling weight. Prediction is `clip(f_OBS + ĝ_res)`.
pub fn fit_cvci_residual(
    obs_rows: &[ScmSample],
    exp_rows: &[ScmSample],
    mode_idx: usize,
    proxy: &Arc<ProxyMap>,
    baseline: &LinearModel,
    lambda: f64,
    penalty_psi: f64,
) -> Result<RewardModel> {
    let head = pooled_head(
        &psi_unit_gram(obs_rows, mode_idx, proxy, Some(baseline))?,
        &psi_unit_gram(exp_rows, mode_idx, proxy, Some(baseline))?,
        lambda,
        penalty_psi,
    )?;
    let mut model = RewardModel::plain(Family::CvciRes, head);
    model.baseline = Some(baseline.clone());
    model.proxy = Some(Arc::clone(proxy));
    model.lambda_pool = Some(lambda);
    Ok(model)
}
