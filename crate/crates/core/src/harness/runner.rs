//! Sweep execution.
//!
//! Work is organized around **replicate units**: one replicate of one grid
//! shares its randomized sample, evaluation/reference pools, truth tables,
//! and value draws across every cell, and shares each confounded log across
//! both budget axes (smaller budgets are prefixes of larger ones). A unit is
//! therefore the natural chunk — everything inside it is sequential and
//! deterministic, and units are embarrassingly parallel. Results are
//! collected in replicate order, so output bytes do not depend on the thread
//! count.
//!
//! Rerunning a single cell walks the same code path with the loops narrowed
//! to that cell's coordinates; the prefix and pairing properties of the data
//! streams guarantee the narrowed run sees the same rows, fits, and floats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::{fit_at, fit_family_tuned, Family, FitContext, FitOptions};
use crate::harness::config::SweepConfig;
use crate::harness::seeds::derive_cell_seed;
use crate::metrics::{cell_report, CellKey, CellReport};
use crate::numerics::mix_fields;
use crate::scm::generate::{
    sample_context_pool, sample_exp_rows, sample_obs_rows, StreamSeeds, EVAL_ID_BASE, REF_ID_BASE,
};
use crate::scm::params::GeneratorParams;
use crate::scm::truth::{truth_tables, TruthTable};
use crate::scm::{RewardMode, ScmSample};
use crate::tuning::SelectionTrace;
use crate::values::{dm_values, dr_values, sample_eval_draws, EvalDraws};

/// Sub-seed tag separating selection randomness from the cell seed itself.
const SEL_TAG: u64 = 1;
/// Domain tag for the doubly-robust fold stream. The partition is keyed by
/// (master seed, replicate, n_exp) only: folds over the randomized rows are
/// shared across β, the log budget, reward maps, and methods, so DR values
/// are paired along every axis the underlying rows are paired along.
const DR_STREAM: u64 = 0xD2F0_0000_0000_0003;

/// One hyperparameter-selection record, tagged with where it happened.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub cell: String,
    pub seed: u64,
    pub method: String,
    pub trace: SelectionTrace,
}

/// A (cell, replicate, method) run that errored. The sweep records it and
/// moves on; failures surface in the manifest rather than killing siblings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub cell: String,
    pub seed: u64,
    pub method: String,
    pub error: String,
}

/// Everything a sweep (or single-cell rerun) produces, in-memory.
#[derive(Debug, Default)]
pub struct SweepOutput {
    pub reports: Vec<CellReport>,
    pub traces: Vec<TraceRecord>,
    pub failures: Vec<FailureRecord>,
}

impl SweepOutput {
    fn absorb(&mut self, other: SweepOutput) {
        self.reports.extend(other.reports);
        self.traces.extend(other.traces);
        self.failures.extend(other.failures);
    }
}

/// Shallow per-budget view of a built fit context: the observational digests
/// are cloned (cheap relative to building them), only the randomized slice
/// changes.
fn with_exp<'a>(ctx: &FitContext<'a>, exp: &'a [ScmSample]) -> FitContext<'a> {
    FitContext {
        obs_rows: ctx.obs_rows,
        exp_rows: exp,
        mode_idx: ctx.mode_idx,
        proxy: Arc::clone(&ctx.proxy),
        compression: Arc::clone(&ctx.compression),
        baseline: ctx.baseline.clone(),
        obs_dense_gram: ctx.obs_dense_gram.clone(),
        obs_psi_residual_gram: ctx.obs_psi_residual_gram.clone(),
        obs_cf: ctx.obs_cf.clone(),
        obs_y: ctx.obs_y.clone(),
        obs_psi_coords: ctx.obs_psi_coords.clone(),
    }
}

/// Tune, fit, and score one family in one cell. Returns the report and the
/// selection trace (when the family tunes).
#[allow(clippy::too_many_arguments)]
fn run_method(
    family: Family,
    ctx: &FitContext<'_>,
    opts: &FitOptions,
    draws: &EvalDraws,
    truth: &TruthTable,
    key: &CellKey,
    replicate: u64,
    cell_seed: u64,
    dr_seed: u64,
    dr_folds: usize,
    n_agents: usize,
) -> Result<(CellReport, Option<SelectionTrace>)> {
    let sel_seed = mix_fields(&[cell_seed, SEL_TAG]);
    let fit = fit_family_tuned(family, ctx, opts, sel_seed)?;
    let dm = dm_values(&fit.model, draws)?;
    let values = dr_values(
        |train| fit_at(ctx, opts, family, &fit.params, train),
        ctx.exp_rows,
        ctx.mode_idx,
        n_agents,
        &dm,
        dr_folds,
        dr_seed,
    )?;
    let mut hparams = BTreeMap::new();
    for (name, value) in fit.params.entries() {
        hparams.insert(name.to_string(), value);
    }
    hparams.insert("selection".to_string(), fit.effective_mode.label().to_string());
    let report = cell_report(
        replicate,
        key.clone(),
        family.label().to_string(),
        &values,
        truth,
        hparams,
    )?;
    Ok((report, fit.trace))
}

/// Run one replicate across (a filtered view of) the grid.
///
/// Generation failures abort the unit — they mean the configuration cannot
/// produce data at all. Per-method fit failures are recorded and skipped.
fn run_unit(
    params: &GeneratorParams,
    cfg: &SweepConfig,
    replicate: u64,
    filter: Option<&CellKey>,
) -> Result<SweepOutput> {
    let betas: Vec<f64> = match filter {
        Some(k) => vec![k.beta],
        None => cfg.betas.clone(),
    };
    let obs_levels: Vec<usize> = match filter {
        Some(k) => vec![k.n_obs],
        None => cfg.n_obs.clone(),
    };
    let exp_levels: Vec<usize> = match filter {
        Some(k) => vec![k.n_exp],
        None => cfg.n_exp.clone(),
    };
    let mode_indices: Vec<usize> = match filter {
        Some(k) => vec![cfg
            .modes
            .iter()
            .position(|m| m.label() == k.mode)
            .ok_or_else(|| Error::MissingGridEntries(format!("mode {}", k.mode)))?],
        None => (0..cfg.modes.len()).collect(),
    };
    let max_obs = *obs_levels.iter().max().expect("validated nonempty");
    let max_exp = *exp_levels.iter().max().expect("validated nonempty");
    let n_agents = params.config.n_agents;

    // Replicate-level data, shared by every cell: the randomized slice, the
    // held-out pools, truth for every tracked reward map, and the value
    // draws. None of these depend on β or the budgets.
    let shared = StreamSeeds::derive(cfg.master_seed, cfg.router, betas[0], replicate);
    let exp_full = sample_exp_rows(params, &cfg.modes, max_exp, shared.exp_rows)?;
    let eval_pool = sample_context_pool(params, params.config.n_eval, EVAL_ID_BASE, shared.eval_contexts);
    let ref_pool = sample_context_pool(params, params.config.n_true, REF_ID_BASE, shared.ref_contexts);
    let truth = truth_tables(params, &cfg.modes, &eval_pool, &ref_pool, shared.truth_sim, false)?;
    let draws = sample_eval_draws(params, &eval_pool, cfg.values.dm_draws, shared.value_sim)?;

    let mut out = SweepOutput::default();
    for &beta in &betas {
        let streams = StreamSeeds::derive(cfg.master_seed, cfg.router, beta, replicate);
        let obs_full = sample_obs_rows(params, &cfg.modes, cfg.router, beta, max_obs, streams.obs_rows)?;
        for &n_obs in &obs_levels {
            let obs_slice = &obs_full[..n_obs];
            for &mode_idx in &mode_indices {
                let mode_label = cfg.modes[mode_idx].label();
                let base_ctx = match FitContext::build(obs_slice, &exp_full, mode_idx, &cfg.fit) {
                    Ok(ctx) => ctx,
                    Err(e) => {
                        // The whole (β, n_obs, mode) group shares this
                        // context; record one failure per affected cell and
                        // method.
                        let msg = e.to_string();
                        for &n_exp in &exp_levels {
                            let key = CellKey { beta, n_obs, n_exp, mode: mode_label.clone() };
                            for family in &cfg.methods {
                                out.failures.push(FailureRecord {
                                    cell: key.label(),
                                    seed: replicate,
                                    method: family.label().to_string(),
                                    error: msg.clone(),
                                });
                            }
                        }
                        continue;
                    }
                };
                for &n_exp in &exp_levels {
                    let ctx = with_exp(&base_ctx, &exp_full[..n_exp]);
                    let key = CellKey { beta, n_obs, n_exp, mode: mode_label.clone() };
                    let cell_seed = derive_cell_seed(cfg.master_seed, &key, replicate);
                    let dr_seed =
                        mix_fields(&[cfg.master_seed, DR_STREAM, replicate, n_exp as u64]);
                    for &family in &cfg.methods {
                        match run_method(
                            family,
                            &ctx,
                            &cfg.fit,
                            &draws,
                            &truth[mode_idx],
                            &key,
                            replicate,
                            cell_seed,
                            dr_seed,
                            cfg.values.dr_folds,
                            n_agents,
                        ) {
                            Ok((report, trace)) => {
                                out.reports.push(report);
                                if let Some(trace) = trace {
                                    out.traces.push(TraceRecord {
                                        cell: key.label(),
                                        seed: replicate,
                                        method: family.label().to_string(),
                                        trace,
                                    });
                                }
                            }
                            Err(e) => out.failures.push(FailureRecord {
                                cell: key.label(),
                                seed: replicate,
                                method: family.label().to_string(),
                                error: e.in_cell(key.label()).to_string(),
                            }),
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn collect_units(
    cfg: &SweepConfig,
    params: &GeneratorParams,
    filter: Option<&CellKey>,
    threads: usize,
) -> Result<SweepOutput> {
    let units: Result<Vec<SweepOutput>> = if threads == 1 {
        (0..cfg.seeds).map(|rep| run_unit(params, cfg, rep, filter)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..cfg.seeds)
                .into_par_iter()
                .map(|rep| run_unit(params, cfg, rep, filter))
                .collect()
        })
    };
    let mut out = SweepOutput::default();
    for unit in units? {
        out.absorb(unit);
    }
    Ok(out)
}

/// Run the full sweep. `threads = 0` uses all cores; any thread count
/// produces identical output bytes because units are collected in replicate
/// order.
pub fn run_sweep(cfg: &SweepConfig, threads: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    let params = GeneratorParams::realize(cfg.generator.clone(), cfg.master_seed)?;
    collect_units(cfg, &params, None, threads)
}

/// Re-run one cell of a sweep, reproducing that cell's sweep output exactly.
pub fn run_cell(cfg: &SweepConfig, key: &CellKey, threads: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    let label = key.label();
    if !cfg.cells().iter().any(|c| c.label() == label) {
        return Err(Error::MissingGridEntries(format!("cell {label} is not in the grid")));
    }
    let params = GeneratorParams::realize(cfg.generator.clone(), cfg.master_seed)?;
    collect_units(cfg, &params, Some(key), threads)
}

/// The reward maps a config tracks, in grid order — exposed for reporting.
pub fn mode_labels(modes: &[RewardMode]) -> Vec<String> {
    modes.iter().map(|m| m.label()).collect()
}
