//! Row and pool sampling for one experiment cell.
//!
//! A cell couples three data sources to one underlying generator:
//!
//! * **OBS** — large confounded logs. The router reads information the
//!   outcome also depends on (latent state or user segment), so regression
//!   on these rows alone inherits selection bias.
//! * **EXP** — a small slice with uniformly randomized actions.
//! * Held-out context pools: an evaluation pool that value estimates are
//!   averaged over, and a reference pool that ground-truth per-agent values
//!   are scored on.
//!
//! ## Stream discipline
//!
//! Every dataset draws from its own seeded ChaCha stream, derived in
//! [`StreamSeeds::derive`]. Two properties are load-bearing and tested:
//!
//! * **Budget pairing** — OBS streams are keyed by (master seed, router, β,
//!   replicate) but *not* by `n_obs`, so a smaller budget is a row-for-row
//!   prefix of a larger one. Likewise EXP streams are not keyed by `n_exp`,
//!   and EXP/eval/truth streams are shared across β, budgets, and routers.
//!   Comparisons along any grid axis are therefore paired.
//! * **Mode independence** — the per-row draw layout never depends on which
//!   reward maps a cell tracks: scalar outcome noise is always consumed, and
//!   OBS rows always consume auxiliary-label noise. Cells tracking different
//!   mode lists see identical contexts, actions, and mediators at matched
//!   seeds, differing only in the outcome columns.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    hash_features, mix_fields, signed_hash_project, signed_hash_project_sparse, SparseVec,
};
use crate::scm::context::{sample_context, Context};
use crate::scm::mediator::sample_mediator;
use crate::scm::outcome::{
    aux_labels, observed_outcome, scalar_outcome_from_noise, RewardMode,
};
use crate::scm::params::GeneratorParams;
use crate::scm::router::{route_mixture, route_softmax, RouterKind};
use crate::scm::truth::{truth_tables, TruthTable};

/// Context-id bases keep the four pools disjoint by construction.
pub const OBS_ID_BASE: u64 = 0;
pub const EXP_ID_BASE: u64 = 1_000_000;
pub const EVAL_ID_BASE: u64 = 2_000_000;
pub const REF_ID_BASE: u64 = 3_000_000;

// Stream labels folded into derived seeds.
const STREAM_OBS: u64 = 1;
const STREAM_EXP: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_REF: u64 = 4;
const STREAM_TRUTH: u64 = 5;
const STREAM_VALUE: u64 = 6;

/// Which arm a row was logged under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Obs,
    Exp,
}

impl Source {
    pub fn label(self) -> &'static str {
        match self {
            Source::Obs => "OBS",
            Source::Exp => "EXP",
        }
    }
}

/// One logged interaction, featurized and scored.
///
/// `outcomes[k]` is the observed outcome under the k-th tracked reward map.
/// `hidden` is the generator's private response representation: it feeds
/// truth computations and diagnostics, never estimators. `aux` is present on
/// OBS rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSample {
    pub context_id: u64,
    pub segment: usize,
    pub latent: Array1<f64>,
    pub action: usize,
    pub phi: SparseVec,
    pub dense: SparseVec,
    pub hidden: Array1<f64>,
    pub outcomes: Vec<f64>,
    pub aux: Option<Array1<f64>>,
    pub source: Source,
}

/// Per-replicate seeds for every stream a cell touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub obs_rows: u64,
    pub exp_rows: u64,
    pub eval_contexts: u64,
    pub ref_contexts: u64,
    pub truth_sim: u64,
    pub value_sim: u64,
}

fn router_tag(router: RouterKind) -> u64 {
    match router {
        RouterKind::Mixture => 0,
        RouterKind::Softmax => 1,
    }
}

impl StreamSeeds {
    /// Derive all stream seeds for one replicate. Only the OBS stream is
    /// keyed by the router and β — everything else is identical across the
    /// grid so that cell comparisons are paired.
    pub fn derive(master_seed: u64, router: RouterKind, beta: f64, replicate: u64) -> Self {
        StreamSeeds {
            obs_rows: mix_fields(&[master_seed, STREAM_OBS, router_tag(router), beta.to_bits(), replicate]),
            exp_rows: mix_fields(&[master_seed, STREAM_EXP, replicate]),
            eval_contexts: mix_fields(&[master_seed, STREAM_EVAL, replicate]),
            ref_contexts: mix_fields(&[master_seed, STREAM_REF, replicate]),
            truth_sim: mix_fields(&[master_seed, STREAM_TRUTH, replicate]),
            value_sim: mix_fields(&[master_seed, STREAM_VALUE, replicate]),
        }
    }
}

/// Everything one cell's estimators and scoring need.
#[derive(Debug, Clone)]
pub struct CellData {
    pub modes: Vec<RewardMode>,
    pub obs: Vec<ScmSample>,
    pub exp: Vec<ScmSample>,
    pub eval_contexts: Vec<Context>,
    pub ref_contexts: Vec<Context>,
    pub truth: Vec<TruthTable>,
}

/// Hashed mediator features and their two fixed projections.
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorFeatures {
    pub phi: SparseVec,
    pub dense: SparseVec,
    pub hidden: Array1<f64>,
}

/// Hash mediator tokens and project into the regression and hidden spaces.
pub fn featurize_mediator(params: &GeneratorParams, tokens: &[u32]) -> Result<MediatorFeatures> {
    let bytes: Vec<[u8; 4]> = tokens.iter().map(|t| t.to_le_bytes()).collect();
    let phi = hash_features(&bytes, params.config.phi_dim)?;
    let hidden = signed_hash_project(&phi, params.config.phi_star_dim, params.hidden_seed);
    let dense = signed_hash_project_sparse(&phi, params.config.dense_dim, params.dense_seed);
    Ok(MediatorFeatures { phi, dense, hidden })
}

/// The hidden projection alone — used by truth passes, which never need the
/// regression features.
pub fn hidden_features(params: &GeneratorParams, tokens: &[u32]) -> Result<Array1<f64>> {
    let bytes: Vec<[u8; 4]> = tokens.iter().map(|t| t.to_le_bytes()).collect();
    let phi = hash_features(&bytes, params.config.phi_dim)?;
    Ok(signed_hash_project(&phi, params.config.phi_star_dim, params.hidden_seed))
}

/// Draw the latent state for a context: Gaussian around a fixed linear map
/// of the context sketch.
pub fn sample_latent<R: Rng>(params: &GeneratorParams, psi_x: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    let mut u = params.t_map.dot(psi_x);
    let sd = params.config.u_cond_var.sqrt();
    for v in u.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sd * z;
    }
    u
}

/// Finish a row once context, latent state, and action are fixed: draw the
/// mediator, featurize, score under every tracked reward map, and (for OBS
/// rows) attach auxiliary labels.
///
/// Per-row draw order: mediator, scalar outcome noise (always consumed),
/// auxiliary noise (OBS only). The outcome law is identical for both sources
/// — `source` only controls the aux channel and the row tag.
pub fn complete_row<R: Rng>(
    params: &GeneratorParams,
    modes: &[RewardMode],
    ctx: &Context,
    latent: &Array1<f64>,
    action: usize,
    source: Source,
    rng: &mut R,
) -> Result<ScmSample> {
    let tokens = sample_mediator(params, &ctx.tokens, action, rng);
    let feats = featurize_mediator(params, &tokens)?;
    let eps: f64 = StandardNormal.sample(rng);
    let mut outcomes = Vec::with_capacity(modes.len());
    for &mode in modes {
        let y = match mode {
            RewardMode::Scalar => scalar_outcome_from_noise(params, &feats.hidden, latent, eps),
            other => observed_outcome(other, params, &feats.hidden, latent, ctx.segment, rng)?,
        };
        debug_assert!((0.0..=1.0).contains(&y));
        outcomes.push(y);
    }
    let aux = match source {
        Source::Obs => Some(aux_labels(params, &feats.hidden, rng)),
        Source::Exp => None,
    };
    Ok(ScmSample {
        context_id: ctx.id,
        segment: ctx.segment,
        latent: latent.clone(),
        action,
        phi: feats.phi,
        dense: feats.dense,
        hidden: feats.hidden,
        outcomes,
        aux,
        source,
    })
}

/// One OBS row at a given context: draw the latent state, route through the
/// configured policy, and complete the row.
pub fn sample_obs_row_at<R: Rng>(
    params: &GeneratorParams,
    modes: &[RewardMode],
    router: RouterKind,
    beta: f64,
    ctx: &Context,
    rng: &mut R,
) -> Result<ScmSample> {
    let latent = sample_latent(params, &ctx.psi_x, rng);
    let action = match router {
        RouterKind::Mixture => route_mixture(params, beta, &ctx.psi_x, &latent, rng),
        RouterKind::Softmax => route_softmax(params, beta, &ctx.psi_x, ctx.segment, rng),
    };
    complete_row(params, modes, ctx, &latent, action, Source::Obs, rng)
}

/// One EXP row at a given context: latent state drawn the same way, action
/// uniform over the agent set.
pub fn sample_exp_row_at<R: Rng>(
    params: &GeneratorParams,
    modes: &[RewardMode],
    ctx: &Context,
    rng: &mut R,
) -> Result<ScmSample> {
    let latent = sample_latent(params, &ctx.psi_x, rng);
    let action = (rng.random::<u64>() % params.config.n_agents as u64) as usize;
    complete_row(params, modes, ctx, &latent, action, Source::Exp, rng)
}

fn check_modes(modes: &[RewardMode]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::Config("a cell must track at least one reward map".into()));
    }
    Ok(())
}

/// Sample the confounded log. Rows come sequentially off one seeded stream,
/// so a smaller `n_rows` yields a prefix of a larger one.
pub fn sample_obs_rows(
    params: &GeneratorParams,
    modes: &[RewardMode],
    router: RouterKind,
    beta: f64,
    n_rows: usize,
    seed: u64,
) -> Result<Vec<ScmSample>> {
    check_modes(modes)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("confounding weight must lie in [0,1], got {beta}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let ctx = sample_context(params, OBS_ID_BASE + i as u64, &mut rng);
        rows.push(sample_obs_row_at(params, modes, router, beta, &ctx, &mut rng)?);
    }
    Ok(rows)
}

/// Sample the randomized slice. Same prefix property as [`sample_obs_rows`].
pub fn sample_exp_rows(
    params: &GeneratorParams,
    modes: &[RewardMode],
    n_rows: usize,
    seed: u64,
) -> Result<Vec<ScmSample>> {
    check_modes(modes)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_rows);
    for j in 0..n_rows {
        let ctx = sample_context(params, EXP_ID_BASE + j as u64, &mut rng);
        rows.push(sample_exp_row_at(params, modes, &ctx, &mut rng)?);
    }
    Ok(rows)
}

/// Sample a held-out context pool.
pub fn sample_context_pool(params: &GeneratorParams, n: usize, id_base: u64, seed: u64) -> Vec<Context> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|i| sample_context(params, id_base + i as u64, &mut rng)).collect()
}

/// Assemble one cell: confounded log, randomized slice, held-out pools, and
/// matched truth tables for every tracked reward map.
pub fn generate_cell(
    params: &GeneratorParams,
    modes: &[RewardMode],
    router: RouterKind,
    beta: f64,
    n_obs: usize,
    n_exp: usize,
    seeds: &StreamSeeds,
) -> Result<CellData> {
    check_modes(modes)?;
    if n_obs == 0 || n_exp == 0 {
        return Err(Error::Config("both data sources need at least one row".into()));
    }
    let obs = sample_obs_rows(params, modes, router, beta, n_obs, seeds.obs_rows)?;
    let exp = sample_exp_rows(params, modes, n_exp, seeds.exp_rows)?;
    let eval_contexts = sample_context_pool(params, params.config.n_eval, EVAL_ID_BASE, seeds.eval_contexts);
    let ref_contexts = sample_context_pool(params, params.config.n_true, REF_ID_BASE, seeds.ref_contexts);
    let truth = truth_tables(params, modes, &eval_contexts, &ref_contexts, seeds.truth_sim, false)?;
    Ok(CellData { modes: modes.to_vec(), obs, exp, eval_contexts, ref_contexts, truth })
}
