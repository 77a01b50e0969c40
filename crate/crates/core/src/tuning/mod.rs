//! EXP-side hyperparameter selection.
//!
//! The randomized sample is the only unconfounded data available, so every
//! tuned family selects its hyperparameters against it — but naive per-row
//! cross-validation would reward memorizing a generative model's quirks
//! rather than ranking models. The primary scheme therefore partitions the
//! *agents* appearing in EXP into folds: a candidate is fit with the fold's
//! agents entirely absent and judged on how well it reproduces each held-out
//! agent's mean outcome, weighted by its row count. Degenerate samples fall
//! back to sample-level cross-validation (recorded), and one family uses a
//! plain holdout split instead. Near-ties are resolved toward the more
//! regularized, less aggressive candidate via an explicit preference key.

use crate::error::{Error, Result};
use crate::estimators::RewardModel;
use crate::scm::ScmSample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// How a family's hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    AgentCv,
    SampleCvFallback,
    ExpHoldout,
    Fixed,
}

impl CvMode {
    pub fn label(&self) -> &'static str {
        match self {
            CvMode::AgentCv => "agent_cv",
            CvMode::SampleCvFallback => "sample_cv_fallback",
            CvMode::ExpHoldout => "exp_holdout",
            CvMode::Fixed => "fixed",
        }
    }
}

/// Selection plan: the requested scheme and its knobs. The mode actually
/// used (after any fallback) is recorded on the [`Selection`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CvPlan {
    pub mode: CvMode,
    /// Fold count for the cross-validation modes (≥ 2).
    pub folds: usize,
    /// Fraction of EXP reserved for scoring in holdout mode.
    pub holdout_frac: f64,
    /// Relative tolerance within which losses count as tied.
    pub tie_tolerance: f64,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan { mode: CvMode::AgentCv, folds: 4, holdout_frac: 0.3, tie_tolerance: 1e-8 }
    }
}

/// A tunable hyperparameter point: a display label for traces and a
/// preference key for tie-breaking (lexicographically larger keys win, so
/// implementations orient each component toward "more regularized / less
/// aggressive").
pub trait Candidate: Clone {
    fn label(&self) -> String;
    fn tie_key(&self) -> Vec<f64>;
}

/// Per-candidate record kept for the run log.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateTrace {
    pub label: String,
    pub mean_loss: f64,
    pub fold_losses: Vec<f64>,
}

/// JSON-lines-friendly account of one selection.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace {
    pub requested_mode: CvMode,
    pub effective_mode: CvMode,
    pub seed: u64,
    pub candidates: Vec<CandidateTrace>,
    pub chosen: String,
    /// (train, holdout) sizes when the holdout path ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_sizes: Option<(usize, usize)>,
}

/// Outcome of a selection: the winning candidate plus its audit trail.
#[derive(Debug, Clone)]
pub struct Selection<C> {
    pub chosen: C,
    pub chosen_loss: f64,
    pub effective_mode: CvMode,
    pub trace: SelectionTrace,
}

/// Deterministic tie-break: among tied candidates, pick the lexicographically
/// largest preference key; equal keys resolve to the earliest, keeping the
/// result independent of how ties entered the list.
pub fn tie_break<C: Candidate>(tied: &[C]) -> Result<usize> {
    if tied.is_empty() {
        return Err(Error::EmptyCandidateGrid);
    }
    let mut best = 0usize;
    for i in 1..tied.len() {
        let a = tied[i].tie_key();
        let b = tied[best].tie_key();
        debug_assert_eq!(a.len(), b.len(), "tie keys must agree in shape within one grid");
        if a.iter().zip(&b).any(|(x, y)| x != y) {
            let preferred = a.iter().zip(&b).find(|(x, y)| x != y).map(|(x, y)| x > y).unwrap();
            if preferred {
                best = i;
            }
        }
    }
    Ok(best)
}

/// Pick the minimizer of `mean_losses`, resolving relative near-ties through
/// the candidates' preference keys.
fn select_min<C: Candidate>(candidates: &[C], mean_losses: &[f64], tol: f64) -> Result<usize> {
    let mut min = f64::INFINITY;
    for &l in mean_losses {
        if !l.is_finite() {
            return Err(Error::NonFinite("candidate loss"));
        }
        min = min.min(l);
    }
    let near: Vec<usize> = (0..candidates.len())
        .filter(|&i| mean_losses[i] - min <= tol * min.abs())
        .collect();
    let tied: Vec<C> = near.iter().map(|&i| candidates[i].clone()).collect();
    Ok(near[tie_break(&tied)?])
}

/// Group row indices by agent, preserving first-appearance order of rows.
fn rows_by_agent(rows: &[ScmSample]) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        map.entry(r.action).or_default().push(i);
    }
    map
}

/// Count-weighted squared gap between each held-out agent's mean prediction
/// and mean outcome:  Σ_a ω_a (mean r̂ − mean Y)², ω_a ∝ n_a.
///
/// Returns the loss together with the (unit) sum of the applied weights so
/// tests can certify the normalization.
pub(crate) fn heldout_agent_loss(
    model: &RewardModel,
    rows: &[ScmSample],
    held: &[usize],
    mode_idx: usize,
) -> Result<(f64, f64)> {
    let mut per_agent: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for &i in held {
        let r = &rows[i];
        let pred = model.predict(&r.dense)?;
        let y = crate::estimators::linear::outcome_at(r, mode_idx)?;
        let e = per_agent.entry(r.action).or_insert((0.0, 0.0, 0));
        e.0 += pred;
        e.1 += y;
        e.2 += 1;
    }
    let total = held.len() as f64;
    let mut loss = 0.0;
    let mut weight_sum = 0.0;
    for (_, (p, y, n)) in per_agent {
        let w = n as f64 / total;
        let gap = p / n as f64 - y / n as f64;
        loss += w * gap * gap;
        weight_sum += w;
    }
    Ok((loss, weight_sum))
}

/// Mean squared prediction error over held row indices (sample-level loss).
fn heldout_sample_loss(
    model: &RewardModel,
    rows: &[ScmSample],
    held: &[usize],
    mode_idx: usize,
) -> Result<f64> {
    let mut sse = 0.0;
    for &i in held {
        let r = &rows[i];
        let pred = model.predict(&r.dense)?;
        let y = crate::estimators::linear::outcome_at(r, mode_idx)?;
        sse += (pred - y).powi(2);
    }
    Ok(sse / held.len() as f64)
}

/// Seeded round-robin fold assignment after a shuffle: returns `folds`
/// disjoint groups of the given items, sizes differing by at most one.
fn shuffled_folds<T: Clone>(items: &[T], folds: usize, seed: u64) -> Vec<Vec<T>> {
    let mut order: Vec<T> = items.to_vec();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, it) in order.into_iter().enumerate() {
        out[i % folds].push(it);
    }
    out
}

/// Model-level (agent-level) cross-validation.
///
/// Agents appearing in `exp_rows` are partitioned into `plan.folds` seeded
/// folds. For each fold, every candidate is fit by `fitter` on the EXP rows
/// whose agent lies *outside* the fold (any observational data a fitter uses
/// stays fully available through its captured state), then scored with the
/// count-weighted held-out agent-mean loss. The candidate minimizing the
/// average fold loss wins; near-ties go to the preference key. With fewer
/// distinct agents than folds the partition degrades to sample-level
/// cross-validation over rows, and the selection records that fallback.
pub fn agent_cv_select<C, F>(
    candidates: &[C],
    mut fitter: F,
    exp_rows: &[ScmSample],
    mode_idx: usize,
    plan: &CvPlan,
    seed: u64,
) -> Result<Selection<C>>
where
    C: Candidate,
    F: FnMut(&C, &[ScmSample]) -> Result<RewardModel>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateGrid);
    }
    if plan.folds < 2 {
        return Err(Error::Config(format!("cross-validation needs ≥ 2 folds, got {}", plan.folds)));
    }
    let by_agent = rows_by_agent(exp_rows);
    let agent_mode = by_agent.len() >= plan.folds.max(2);
    let effective = if agent_mode { CvMode::AgentCv } else { CvMode::SampleCvFallback };

    // Held-out row-index groups, one per fold.
    let held_folds: Vec<Vec<usize>> = if agent_mode {
        let agents: Vec<usize> = by_agent.keys().copied().collect();
        shuffled_folds(&agents, plan.folds, seed)
            .into_iter()
            .map(|group| group.into_iter().flat_map(|a| by_agent[&a].iter().copied()).collect())
            .collect()
    } else {
        if exp_rows.len() < plan.folds {
            return Err(Error::Config(format!(
                "{} EXP rows cannot form {} cross-validation folds",
                exp_rows.len(),
                plan.folds
            )));
        }
        let idx: Vec<usize> = (0..exp_rows.len()).collect();
        shuffled_folds(&idx, plan.folds, seed)
    };

    let mut fold_losses = vec![Vec::with_capacity(plan.folds); candidates.len()];
    for held in &held_folds {
        let in_fold: std::collections::BTreeSet<usize> = held.iter().copied().collect();
        let train: Vec<ScmSample> = exp_rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_fold.contains(i))
            .map(|(_, r)| r.clone())
            .collect();
        for (c_idx, cand) in candidates.iter().enumerate() {
            let model = fitter(cand, &train)?;
            let loss = if agent_mode {
                heldout_agent_loss(&model, exp_rows, held, mode_idx)?.0
            } else {
                heldout_sample_loss(&model, exp_rows, held, mode_idx)?
            };
            fold_losses[c_idx].push(loss);
        }
    }
    let mean_losses: Vec<f64> =
        fold_losses.iter().map(|ls| ls.iter().sum::<f64>() / ls.len() as f64).collect();
    let winner = select_min(candidates, &mean_losses, plan.tie_tolerance)?;
    let trace = SelectionTrace {
        requested_mode: plan.mode,
        effective_mode: effective,
        seed,
        candidates: candidates
            .iter()
            .zip(&fold_losses)
            .zip(&mean_losses)
            .map(|((c, fl), &ml)| CandidateTrace {
                label: c.label(),
                mean_loss: ml,
                fold_losses: fl.clone(),
            })
            .collect(),
        chosen: candidates[winner].label(),
        holdout_sizes: None,
    };
    Ok(Selection {
        chosen: candidates[winner].clone(),
        chosen_loss: mean_losses[winner],
        effective_mode: effective,
        trace,
    })
}

/// Holdout selection: a seeded split reserves `plan.holdout_frac` of the EXP
/// rows for scoring; candidates are fit on the remainder and judged by mean
/// squared prediction error on the reserved rows.
pub fn exp_holdout_select<C, F>(
    candidates: &[C],
    mut fitter: F,
    exp_rows: &[ScmSample],
    mode_idx: usize,
    plan: &CvPlan,
    seed: u64,
) -> Result<Selection<C>>
where
    C: Candidate,
    F: FnMut(&C, &[ScmSample]) -> Result<RewardModel>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateGrid);
    }
    let n = exp_rows.len();
    let n_hold = (n as f64 * plan.holdout_frac).round() as usize;
    if n_hold < 2 || n - n_hold < 2 {
        return Err(Error::ExpBudgetTooSmall);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let held: Vec<usize> = idx[..n_hold].to_vec();
    let train: Vec<ScmSample> = idx[n_hold..].iter().map(|&i| exp_rows[i].clone()).collect();

    let mut losses = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let model = fitter(cand, &train)?;
        losses.push(heldout_sample_loss(&model, exp_rows, &held, mode_idx)?);
    }
    let winner = select_min(candidates, &losses, plan.tie_tolerance)?;
    let trace = SelectionTrace {
        requested_mode: CvMode::ExpHoldout,
        effective_mode: CvMode::ExpHoldout,
        seed,
        candidates: candidates
            .iter()
            .zip(&losses)
            .map(|(c, &l)| CandidateTrace {
                label: c.label(),
                mean_loss: l,
                fold_losses: vec![l],
            })
            .collect(),
        chosen: candidates[winner].label(),
        holdout_sizes: Some((train.len(), n_hold)),
    };
    Ok(Selection {
        chosen: candidates[winner].clone(),
        chosen_loss: losses[winner],
        effective_mode: CvMode::ExpHoldout,
        trace,
    })
}
