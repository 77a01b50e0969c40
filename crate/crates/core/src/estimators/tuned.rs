//! End-to-end tuned fits: one entry point per estimator family.
//!
//! [`FitContext::build`] digests an OBS log once — head Gram, baseline,
//! learned proxy, its compression, cross-fitted baseline scores, projected
//! proxy coordinates — and every family, every cross-validation fold, and
//! every doubly-robust refit then runs from those shared pieces through
//! [`fit_at`]. That keeps repeated fits cheap (the observational side is
//! never re-accumulated) and byte-reproducible (all fits of one cell see the
//! same floats in the same order).

use crate::error::{Error, Result};
use crate::numerics::pca::ProjectionMap;
use crate::numerics::ridge::{GramAccumulator, LinearModel};
use crate::scm::ScmSample;
use crate::tuning::{
    agent_cv_select, exp_holdout_select, Candidate, CvMode, CvPlan, Selection, SelectionTrace,
};
use serde::Serialize;
use std::sync::Arc;

use super::grounded::{
    cross_fit_baseline_predictions, fit_grounded_anchor_cached, fit_grounded_linear_at,
    fit_grounded_rich_at,
};
use super::linear::{
    dense_unit_gram, fit_exp_only, fit_proxy_exp, mean_loss_head, outcome_at, pooled_head,
    psi_unit_gram,
};
use super::model::{BasisKind, Family, RewardModel};
use super::proxy::{compress_psi, learn_proxy, ProxyMap};

/// Fixed defaults and candidate grids for every family.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Ridge level for raw densified-feature fits (EXP-only, OBS-only, the
    /// baseline, pooled fits) under mean-squared loss.
    pub raw_penalty: f64,
    /// Ridge level for proxy-space fits (proxy-EXP, the linear grounded
    /// correction) under mean-squared loss.
    pub proxy_penalty: f64,
    /// ψ-penalty grid for the residual-pooled family.
    pub residual_penalty_grid: Vec<f64>,
    /// Correction shrinkage grid for the grounded lin/rich forms.
    pub alpha_grid: Vec<f64>,
    /// OBS pooling weight grid for the pooled families and the anchor.
    pub lambda_grid: Vec<f64>,
    /// Sum-units ridge grid for the rich correction head.
    pub tau_grid: Vec<f64>,
    /// Correction bases tried by the rich and anchored forms.
    pub basis_grid: Vec<BasisKind>,
    /// Anchor shrinkage toward b = 1 and a = 1.
    pub anchor_rho_b: f64,
    pub anchor_rho_alpha: f64,
    /// Ridge level for the auxiliary-label regressions behind the proxy.
    pub aux_penalty: f64,
    /// Proxy dimension learned from OBS.
    pub d_psi: usize,
    /// Compressed dimension ψ̃ used by the rich correction bases.
    pub compression_dim: usize,
    /// Folds for cross-fitting the baseline on its own log.
    pub obs_cf_folds: usize,
    /// Folds for agent-level cross-validation.
    pub k_cv: usize,
    /// EXP fraction reserved when a family tunes on a holdout split.
    pub holdout_frac: f64,
    /// Relative tolerance treating candidate losses as tied.
    pub tie_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            raw_penalty: 1.0,
            proxy_penalty: 0.1,
            residual_penalty_grid: vec![0.01, 0.1, 1.0, 10.0],
            alpha_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            lambda_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tau_grid: vec![0.01, 1.0, 100.0],
            basis_grid: vec![BasisKind::Id, BasisKind::Poly2],
            anchor_rho_b: 1.0,
            anchor_rho_alpha: 1.0,
            aux_penalty: 1.0,
            d_psi: 20,
            compression_dim: 16,
            obs_cf_folds: 5,
            k_cv: 4,
            holdout_frac: 0.3,
            tie_tolerance: 1e-8,
        }
    }
}

/// Shared per-cell state: everything the OBS log contributes to any family,
/// computed once. Fields are public so a runner that already holds partial
/// products can assemble the context directly.
pub struct FitContext<'a> {
    pub obs_rows: &'a [ScmSample],
    pub exp_rows: &'a [ScmSample],
    pub mode_idx: usize,
    pub proxy: Arc<ProxyMap>,
    pub compression: Arc<ProjectionMap>,
    /// Raw observational baseline `f_OBS` (also the OBS-only head).
    pub baseline: LinearModel,
    /// Unit-weight Gram of (densified features, outcome) over all OBS rows.
    pub obs_dense_gram: GramAccumulator,
    /// Unit-weight Gram of (ψ features, outcome − f_OBS) over all OBS rows.
    pub obs_psi_residual_gram: GramAccumulator,
    /// Cross-fitted baseline scores, one per OBS row.
    pub obs_cf: Vec<f64>,
    /// OBS outcomes for the tuned mode, one per row.
    pub obs_y: Vec<f64>,
    /// Compressed proxy coordinates ψ̃, one per OBS row.
    pub obs_psi_coords: Vec<Vec<f64>>,
}

impl<'a> FitContext<'a> {
    pub fn build(
        obs_rows: &'a [ScmSample],
        exp_rows: &'a [ScmSample],
        mode_idx: usize,
        opts: &FitOptions,
    ) -> Result<Self> {
        let obs_dense_gram = dense_unit_gram(obs_rows, mode_idx)?;
        let baseline = mean_loss_head(&obs_dense_gram, opts.raw_penalty)?;
        let proxy = Arc::new(learn_proxy(obs_rows, opts.d_psi, opts.aux_penalty)?);
        let compression = Arc::new(compress_psi(obs_rows, &proxy, opts.compression_dim)?);
        let obs_psi_residual_gram = psi_unit_gram(obs_rows, mode_idx, &proxy, Some(&baseline))?;
        let obs_cf =
            cross_fit_baseline_predictions(obs_rows, mode_idx, opts.raw_penalty, opts.obs_cf_folds)?;
        let mut obs_y = Vec::with_capacity(obs_rows.len());
        let mut obs_psi_coords = Vec::with_capacity(obs_rows.len());
        for r in obs_rows {
            obs_y.push(outcome_at(r, mode_idx)?);
            let psi = proxy.apply(&r.dense)?;
            let coords = compression.project(psi.view())?;
            obs_psi_coords.push(coords.to_vec());
        }
        Ok(FitContext {
            obs_rows,
            exp_rows,
            mode_idx,
            proxy,
            compression,
            baseline,
            obs_dense_gram,
            obs_psi_residual_gram,
            obs_cf,
            obs_y,
            obs_psi_coords,
        })
    }
}

/// Hyperparameter point of one family. `Fixed` marks the families that take
/// their defaults without selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChosenParams {
    Fixed,
    Cvci { lambda: f64 },
    CvciRes { psi_penalty: f64, lambda: f64 },
    GroundedLin { alpha: f64 },
    GroundedRich { basis: BasisKind, tau: f64, alpha: f64 },
    GroundedAnchor { basis: BasisKind, tau: f64, lambda: f64 },
}

fn basis_rank(b: BasisKind) -> f64 {
    // The identity basis is the less aggressive correction class.
    match b {
        BasisKind::Id => 1.0,
        BasisKind::Poly2 => 0.0,
    }
}

impl Candidate for ChosenParams {
    fn label(&self) -> String {
        match self {
            ChosenParams::Fixed => "fixed".to_string(),
            ChosenParams::Cvci { lambda } => format!("lambda={lambda}"),
            ChosenParams::CvciRes { psi_penalty, lambda } => {
                format!("psi_penalty={psi_penalty},lambda={lambda}")
            }
            ChosenParams::GroundedLin { alpha } => format!("alpha={alpha}"),
            ChosenParams::GroundedRich { basis, tau, alpha } => {
                format!("basis={basis},tau={tau},alpha={alpha}")
            }
            ChosenParams::GroundedAnchor { basis, tau, lambda } => {
                format!("basis={basis},tau={tau},lambda={lambda}")
            }
        }
    }

    /// Orientation of every component: larger = more regularized or less
    /// aggressive, which is the direction near-ties resolve toward.
    fn tie_key(&self) -> Vec<f64> {
        match *self {
            ChosenParams::Fixed => vec![],
            ChosenParams::Cvci { lambda } => vec![lambda],
            ChosenParams::CvciRes { psi_penalty, lambda } => vec![psi_penalty, lambda],
            ChosenParams::GroundedLin { alpha } => vec![-alpha],
            ChosenParams::GroundedRich { basis, tau, alpha } => {
                vec![-alpha, tau, basis_rank(basis)]
            }
            ChosenParams::GroundedAnchor { basis, tau, lambda } => {
                vec![lambda, tau, basis_rank(basis)]
            }
        }
    }
}

impl ChosenParams {
    /// Name/value pairs for report rows.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        match *self {
            ChosenParams::Fixed => vec![],
            ChosenParams::Cvci { lambda } => vec![("lambda", lambda.to_string())],
            ChosenParams::CvciRes { psi_penalty, lambda } => vec![
                ("psi_penalty", psi_penalty.to_string()),
                ("lambda", lambda.to_string()),
            ],
            ChosenParams::GroundedLin { alpha } => vec![("alpha", alpha.to_string())],
            ChosenParams::GroundedRich { basis, tau, alpha } => vec![
                ("basis", basis.to_string()),
                ("tau", tau.to_string()),
                ("alpha", alpha.to_string()),
            ],
            ChosenParams::GroundedAnchor { basis, tau, lambda } => vec![
                ("basis", basis.to_string()),
                ("tau", tau.to_string()),
                ("lambda", lambda.to_string()),
            ],
        }
    }
}

fn params_mismatch(family: Family, params: &ChosenParams) -> Error {
    Error::Config(format!("{family} cannot be fit at parameters {params:?}"))
}

/// Fit `family` at explicit hyperparameters on an arbitrary EXP subset,
/// drawing all observational inputs from the context. Cross-validation
/// folds, the final refit on all of EXP, and the doubly-robust leave-fold-out
/// refits all come through here, so a family's fit is one code path
/// everywhere it is evaluated.
pub fn fit_at(
    ctx: &FitContext<'_>,
    opts: &FitOptions,
    family: Family,
    params: &ChosenParams,
    exp_subset: &[ScmSample],
) -> Result<RewardModel> {
    match (family, *params) {
        (Family::ExpOnly, ChosenParams::Fixed) => {
            fit_exp_only(exp_subset, ctx.mode_idx, opts.raw_penalty)
        }
        (Family::ObsOnly, ChosenParams::Fixed) => {
            Ok(RewardModel::plain(Family::ObsOnly, ctx.baseline.clone()))
        }
        (Family::ProxyExp, ChosenParams::Fixed) => {
            fit_proxy_exp(exp_subset, ctx.mode_idx, &ctx.proxy, opts.proxy_penalty)
        }
        (Family::GroundedLin, ChosenParams::GroundedLin { alpha }) => fit_grounded_linear_at(
            &ctx.baseline,
            exp_subset,
            ctx.mode_idx,
            &ctx.proxy,
            alpha,
            opts.proxy_penalty,
        ),
        (Family::GroundedRich, ChosenParams::GroundedRich { basis, tau, alpha }) => {
            fit_grounded_rich_at(
                &ctx.baseline,
                exp_subset,
                ctx.mode_idx,
                &ctx.proxy,
                &ctx.compression,
                basis,
                tau,
                alpha,
            )
        }
        (Family::GroundedAnchor, ChosenParams::GroundedAnchor { basis, tau, lambda }) => {
            // The correction direction is refit from the same EXP subset the
            // calibration sees; its α slot is irrelevant (the anchor replaces
            // the shrinkage with the calibrated pair).
            let rich = fit_grounded_rich_at(
                &ctx.baseline,
                exp_subset,
                ctx.mode_idx,
                &ctx.proxy,
                &ctx.compression,
                basis,
                tau,
                1.0,
            )?;
            fit_grounded_anchor_cached(
                &rich,
                &ctx.obs_y,
                &ctx.obs_cf,
                &ctx.obs_psi_coords,
                exp_subset,
                ctx.mode_idx,
                lambda,
                opts.anchor_rho_b,
                opts.anchor_rho_alpha,
            )
        }
        (Family::Cvci, ChosenParams::Cvci { lambda }) => {
            let exp_gram = if exp_subset.is_empty() {
                GramAccumulator::new(ctx.obs_dense_gram.dim())
            } else {
                dense_unit_gram(exp_subset, ctx.mode_idx)?
            };
            let head = pooled_head(&ctx.obs_dense_gram, &exp_gram, lambda, opts.raw_penalty)?;
            let mut model = RewardModel::plain(Family::Cvci, head);
            model.lambda_pool = Some(lambda);
            Ok(model)
        }
        (Family::CvciRes, ChosenParams::CvciRes { psi_penalty, lambda }) => {
            let exp_gram = if exp_subset.is_empty() {
                GramAccumulator::new(ctx.obs_psi_residual_gram.dim())
            } else {
                psi_unit_gram(exp_subset, ctx.mode_idx, &ctx.proxy, Some(&ctx.baseline))?
            };
            let head =
                pooled_head(&ctx.obs_psi_residual_gram, &exp_gram, lambda, psi_penalty)?;
            let mut model = RewardModel::plain(Family::CvciRes, head);
            model.baseline = Some(ctx.baseline.clone());
            model.proxy = Some(Arc::clone(&ctx.proxy));
            model.lambda_pool = Some(lambda);
            Ok(model)
        }
        _ => Err(params_mismatch(family, params)),
    }
}

/// A fully tuned model plus the record of how its parameters were chosen.
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub model: RewardModel,
    pub params: ChosenParams,
    pub effective_mode: CvMode,
    pub trace: Option<SelectionTrace>,
}

fn candidate_grid(family: Family, opts: &FitOptions) -> Option<Vec<ChosenParams>> {
    match family {
        Family::ExpOnly | Family::ObsOnly | Family::ProxyExp => None,
        Family::GroundedLin => Some(
            opts.alpha_grid.iter().map(|&alpha| ChosenParams::GroundedLin { alpha }).collect(),
        ),
        Family::GroundedRich => {
            let mut grid = Vec::new();
            for &basis in &opts.basis_grid {
                for &tau in &opts.tau_grid {
                    for &alpha in &opts.alpha_grid {
                        grid.push(ChosenParams::GroundedRich { basis, tau, alpha });
                    }
                }
            }
            Some(grid)
        }
        Family::GroundedAnchor => {
            let mut grid = Vec::new();
            for &basis in &opts.basis_grid {
                for &tau in &opts.tau_grid {
                    for &lambda in &opts.lambda_grid {
                        grid.push(ChosenParams::GroundedAnchor { basis, tau, lambda });
                    }
                }
            }
            Some(grid)
        }
        Family::Cvci => {
            Some(opts.lambda_grid.iter().map(|&lambda| ChosenParams::Cvci { lambda }).collect())
        }
        Family::CvciRes => {
            let mut grid = Vec::new();
            for &psi_penalty in &opts.residual_penalty_grid {
                for &lambda in &opts.lambda_grid {
                    grid.push(ChosenParams::CvciRes { psi_penalty, lambda });
                }
            }
            Some(grid)
        }
    }
}

/// Tune and fit one family on the context's full EXP sample.
///
/// Families with fixed defaults fit directly. The linear grounded form picks
/// its shrinkage on an EXP holdout split; every other tuned family selects
/// hyperparameters by agent-level cross-validation (candidates never see the
/// held-out agents' rows, while OBS stays fully available), then refits the
/// winner on all of EXP.
pub fn fit_family_tuned(
    family: Family,
    ctx: &FitContext<'_>,
    opts: &FitOptions,
    seed: u64,
) -> Result<TunedFit> {
    let Some(grid) = candidate_grid(family, opts) else {
        let model = fit_at(ctx, opts, family, &ChosenParams::Fixed, ctx.exp_rows)?;
        return Ok(TunedFit {
            model,
            params: ChosenParams::Fixed,
            effective_mode: CvMode::Fixed,
            trace: None,
        });
    };
    let plan = CvPlan {
        mode: if family == Family::GroundedLin { CvMode::ExpHoldout } else { CvMode::AgentCv },
        folds: opts.k_cv,
        holdout_frac: opts.holdout_frac,
        tie_tolerance: opts.tie_tolerance,
    };
    let fitter = |cand: &ChosenParams, train: &[ScmSample]| fit_at(ctx, opts, family, cand, train);
    let selection: Selection<ChosenParams> = if family == Family::GroundedLin {
        exp_holdout_select(&grid, fitter, ctx.exp_rows, ctx.mode_idx, &plan, seed)?
    } else {
        agent_cv_select(&grid, fitter, ctx.exp_rows, ctx.mode_idx, &plan, seed)?
    };
    let model = fit_at(ctx, opts, family, &selection.chosen, ctx.exp_rows)?;
    Ok(TunedFit {
        model,
        params: selection.chosen,
        effective_mode: selection.effective_mode,
        trace: Some(selection.trace),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::linear::{fit_cvci, fit_cvci_residual, fit_obs_only};
    use crate::estimators::testutil::{gauss_dense, row_with};
    use crate::numerics::hashing::SparseVec;
    use crate::scm::Source;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    const DIM: usize = 12;

    fn small_opts() -> FitOptions {
        FitOptions {
            raw_penalty: 1e-6,
            proxy_penalty: 1e-6,
            aux_penalty: 1e-6,
            d_psi: 3,
            compression_dim: 2,
            k_cv: 3,
            ..FitOptions::default()
        }
    }

    /// Aux labels are fixed linear reads of the dense features, so the
    /// learned proxy spans a known 3-dimensional subspace.
    fn aux_of(x: &SparseVec) -> Array1<f64> {
        let dirs = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
        ];
        Array1::from_iter(dirs.iter().map(|d| {
            let mut padded = vec![0.0; DIM];
            padded[..3].copy_from_slice(d);
            x.dot_dense(&padded)
        }))
    }

    fn obs_row(x: SparseVec, y: f64) -> ScmSample {
        let aux = aux_of(&x);
        row_with(x, y, Some(aux), 0, Source::Obs)
    }

    fn exp_row(x: SparseVec, y: f64, agent: usize) -> ScmSample {
        row_with(x, y, None, agent, Source::Exp)
    }

    fn target(x: &SparseVec) -> f64 {
        let mut w = vec![0.0; DIM];
        w[0] = 0.35;
        w[1] = -0.25;
        w[4] = 0.2;
        0.5 + x.dot_dense(&w)
    }

    fn make_obs(n: usize, seed: u64, bias: f64) -> Vec<ScmSample> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = gauss_dense(DIM, &mut rng);
                let y = target(&x) + bias;
                obs_row(x, y)
            })
            .collect()
    }

    fn make_exp(n: usize, agents: usize, seed: u64, noise: f64) -> Vec<ScmSample> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x = gauss_dense(DIM, &mut rng);
                let y = target(&x) + noise * rng.sample::<f64, _>(StandardNormal);
                exp_row(x, y, i % agents)
            })
            .collect()
    }

    #[test]
    fn fixed_families_skip_selection_and_match_direct_fits() {
        let obs = make_obs(120, 1, 0.0);
        let exp = make_exp(40, 8, 2, 0.0);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        for family in [Family::ExpOnly, Family::ObsOnly, Family::ProxyExp] {
            let fit = fit_family_tuned(family, &ctx, &opts, 3).unwrap();
            assert_eq!(fit.effective_mode, CvMode::Fixed);
            assert!(fit.trace.is_none());
            assert_eq!(fit.params, ChosenParams::Fixed);
            assert_eq!(fit.model.family, family);
        }
        // The OBS-only head is the shared baseline, coefficient for
        // coefficient.
        let direct = fit_obs_only(&obs, 0, opts.raw_penalty).unwrap();
        let tuned = fit_family_tuned(Family::ObsOnly, &ctx, &opts, 3).unwrap();
        assert_eq!(direct.head.weights, tuned.model.head.weights);
        assert_eq!(direct.head.intercept, tuned.model.head.intercept);
    }

    /// The Gram-reusing pooled paths must reproduce the reference fits that
    /// accumulate from rows, exactly.
    #[test]
    fn pooled_fits_from_the_context_match_the_row_based_fits() {
        let obs = make_obs(150, 5, 0.1);
        let exp = make_exp(30, 6, 6, 0.05);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();

        let via_ctx =
            fit_at(&ctx, &opts, Family::Cvci, &ChosenParams::Cvci { lambda: 0.5 }, &exp).unwrap();
        let direct = fit_cvci(&obs, &exp, 0, 0.5, opts.raw_penalty).unwrap();
        assert_eq!(via_ctx.head.weights, direct.head.weights);
        assert_eq!(via_ctx.head.intercept, direct.head.intercept);

        let via_ctx = fit_at(
            &ctx,
            &opts,
            Family::CvciRes,
            &ChosenParams::CvciRes { psi_penalty: 0.1, lambda: 0.25 },
            &exp,
        )
        .unwrap();
        let direct =
            fit_cvci_residual(&obs, &exp, 0, &ctx.proxy, &ctx.baseline, 0.25, 0.1).unwrap();
        assert_eq!(via_ctx.head.weights, direct.head.weights);
        assert_eq!(via_ctx.head.intercept, direct.head.intercept);
    }

    #[test]
    fn mismatched_family_and_parameters_are_rejected() {
        let obs = make_obs(120, 7, 0.0);
        let exp = make_exp(20, 5, 8, 0.0);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        assert!(fit_at(&ctx, &opts, Family::Cvci, &ChosenParams::GroundedLin { alpha: 0.5 }, &exp)
            .is_err());
        assert!(fit_at(&ctx, &opts, Family::ExpOnly, &ChosenParams::Cvci { lambda: 0.0 }, &exp)
            .is_err());
    }

    /// A heavily biased OBS log: pooling toward OBS can only hurt an exact
    /// EXP sample, so the selected pooling weight is zero.
    #[test]
    fn pooled_selection_rejects_a_biased_log() {
        let obs = make_obs(300, 11, 0.4);
        let exp = make_exp(40, 8, 12, 0.0);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        let fit = fit_family_tuned(Family::Cvci, &ctx, &opts, 13).unwrap();
        assert_eq!(fit.effective_mode, CvMode::AgentCv);
        assert_eq!(fit.params, ChosenParams::Cvci { lambda: 0.0 });
    }

    /// A clean log and a small noisy experiment: the selection leans on OBS.
    #[test]
    fn pooled_selection_leans_on_a_clean_log_when_exp_is_noisy() {
        let obs = make_obs(400, 21, 0.0);
        let exp = make_exp(24, 6, 22, 0.3);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        let fit = fit_family_tuned(Family::Cvci, &ctx, &opts, 23).unwrap();
        let ChosenParams::Cvci { lambda } = fit.params else {
            panic!("wrong params variant {:?}", fit.params)
        };
        assert!(lambda >= 0.5, "expected substantial pooling, got λ={lambda}");
    }

    /// EXP outcomes equal to the baseline leave nothing to correct: every
    /// shrinkage level ties at zero discrepancy and the preference order
    /// settles on the least aggressive correction, α = 0.
    #[test]
    fn grounded_shrinkage_ties_resolve_to_no_correction() {
        let obs = make_obs(200, 31, 0.0);
        let opts = small_opts();
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let probe: Vec<ScmSample> = (0..30)
            .map(|i| {
                let x = gauss_dense(DIM, &mut rng);
                exp_row(x, 0.0, i % 6)
            })
            .collect();
        let ctx0 = FitContext::build(&obs, &probe, 0, &opts).unwrap();
        let exp: Vec<ScmSample> = probe
            .iter()
            .map(|r| {
                let y = ctx0.baseline.raw_sparse(&r.dense);
                exp_row(r.dense.clone(), y, r.action)
            })
            .collect();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        let fit = fit_family_tuned(Family::GroundedLin, &ctx, &opts, 33).unwrap();
        assert_eq!(fit.effective_mode, CvMode::ExpHoldout);
        assert_eq!(fit.params, ChosenParams::GroundedLin { alpha: 0.0 });
    }

    /// A planted proxy-space discrepancy makes full correction the unique
    /// holdout minimizer.
    #[test]
    fn grounded_shrinkage_goes_to_full_correction_when_the_log_needs_it() {
        let obs = make_obs(200, 41, 0.0);
        let opts = small_opts();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let probe: Vec<ScmSample> = (0..40)
            .map(|i| {
                let x = gauss_dense(DIM, &mut rng);
                exp_row(x, 0.0, i % 8)
            })
            .collect();
        let ctx0 = FitContext::build(&obs, &probe, 0, &opts).unwrap();
        let exp: Vec<ScmSample> = probe
            .iter()
            .map(|r| {
                let psi = ctx0.proxy.apply(&r.dense).unwrap();
                let y = ctx0.baseline.raw_sparse(&r.dense) - (0.08 * psi[0] + 0.02);
                exp_row(r.dense.clone(), y, r.action)
            })
            .collect();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        let fit = fit_family_tuned(Family::GroundedLin, &ctx, &opts, 43).unwrap();
        assert_eq!(fit.params, ChosenParams::GroundedLin { alpha: 1.0 });
        let ChosenParams::GroundedLin { alpha } = fit.params else { unreachable!() };
        assert_eq!(fit.model.alpha_corr, Some(alpha));
    }

    /// End-to-end smoke for the agent-CV families: the chosen parameters are
    /// consistent with the trace and land in the model's hyperparameter
    /// slots, and predictions stay in the unit interval.
    #[test]
    fn tuned_models_record_their_selection() {
        let obs = make_obs(240, 51, 0.05);
        let exp = make_exp(48, 8, 52, 0.05);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        for family in [Family::GroundedRich, Family::GroundedAnchor, Family::Cvci, Family::CvciRes]
        {
            let fit = fit_family_tuned(family, &ctx, &opts, 53).unwrap();
            assert_eq!(fit.model.family, family);
            let trace = fit.trace.as_ref().expect("tuned family must carry a trace");
            assert_eq!(trace.chosen, fit.params.label());
            assert!(!trace.candidates.is_empty());
            match (family, fit.params) {
                (Family::Cvci, ChosenParams::Cvci { lambda }) => {
                    assert_eq!(fit.model.lambda_pool, Some(lambda));
                }
                (Family::CvciRes, ChosenParams::CvciRes { lambda, .. }) => {
                    assert_eq!(fit.model.lambda_pool, Some(lambda));
                }
                (Family::GroundedRich, ChosenParams::GroundedRich { basis, alpha, .. }) => {
                    assert_eq!(fit.model.basis, Some(basis));
                    assert_eq!(fit.model.alpha_corr, Some(alpha));
                }
                (Family::GroundedAnchor, ChosenParams::GroundedAnchor { basis, lambda, .. }) => {
                    assert_eq!(fit.model.basis, Some(basis));
                    assert_eq!(fit.model.lambda_pool, Some(lambda));
                    assert!(fit.model.anchor.is_some());
                }
                other => panic!("family/params mismatch: {other:?}"),
            }
            for r in &exp {
                let p = fit.model.predict(&r.dense).unwrap();
                assert!((0.0..=1.0).contains(&p), "{family}: prediction {p} outside [0,1]");
            }
        }
    }

    #[test]
    fn two_agents_fall_back_to_sample_level_selection() {
        let obs = make_obs(150, 61, 0.0);
        let exp = make_exp(30, 2, 62, 0.05);
        let opts = small_opts();
        let ctx = FitContext::build(&obs, &exp, 0, &opts).unwrap();
        let fit = fit_family_tuned(Family::Cvci, &ctx, &opts, 63).unwrap();
        assert_eq!(fit.effective_mode, CvMode::SampleCvFallback);
        assert_eq!(fit.trace.unwrap().effective_mode, CvMode::SampleCvFallback);
    }
}
