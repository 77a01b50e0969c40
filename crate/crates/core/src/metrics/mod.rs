//! Recommendation regret, estimation error, and cross-setting aggregation.
//!
//! Regret is the deployment-facing score: pick the per-context argmax agent
//! under the estimated rewards, then charge the gap to the truly best agent
//! under the ground-truth table. It only depends on the estimate through the
//! induced policy, so any strictly increasing transform of the estimates
//! leaves it unchanged.
//!
//! [`aggregate`] condenses per-(cell, seed, method) reports into the
//! league-table columns used to compare methods across a sweep: average
//! rank, top-3 counts, mean percentage regret excess over the per-cell best,
//! macro-averaged regret, and a per-cell winner map with the gap to the
//! runner-up.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::TruthTable;
use crate::values::ValueEstimate;

/// Identifies one sweep cell. `mode` is the reward-map label so coding-grid
/// cells with different score mixtures stay distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub beta: f64,
    pub n_obs: usize,
    pub n_exp: usize,
    pub mode: String,
}

impl CellKey {
    /// Canonical string form, used for grouping and in file names.
    pub fn label(&self) -> String {
        format!(
            "beta={},n_obs={},n_exp={},mode={}",
            self.beta, self.n_obs, self.n_exp, self.mode
        )
    }
}

/// Everything one (cell, seed, method) run produces.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub seed: u64,
    pub key: CellKey,
    pub method: String,
    pub regret: f64,
    pub rmse_xa: f64,
    pub rmse_agent: f64,
    /// Hyperparameters the tuner settled on, by name.
    pub chosen_hparams: BTreeMap<String, String>,
    pub mu_dm: Vec<f64>,
    pub mu_dr: Vec<f64>,
}

/// League-table row for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Mean over cells of the method's within-cell rank (1 = best; tied
    /// methods share the average of the positions they span).
    pub avg_rank: f64,
    /// Cells where the method is within the best three seed-mean regrets,
    /// counting ties at the cutoff inclusively.
    pub top3_count: usize,
    /// Mean over cells of 100·(regret − best regret)/best regret, with the
    /// denominator floored at 1e-9 so exactly-solved cells stay finite.
    pub excess_pct: f64,
    /// Mean over cells of the method's seed-mean regret.
    pub macro_regret: f64,
}

/// Per-cell winner and its margin over the runner-up (0 when either the
/// best regret is tied or only one method ran).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerEntry {
    pub cell: String,
    pub best: String,
    pub gap: f64,
}

/// Seed-mean regret and its standard error for one (cell, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMethodStat {
    pub cell: String,
    pub method: String,
    pub mean_regret: f64,
    /// sd/√n over seeds; 0 when a single seed ran.
    pub se_regret: f64,
    pub n_seeds: usize,
}

/// Cross-setting comparison of every method that ran.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    /// One row per method, best average rank first.
    pub methods: Vec<MethodSummary>,
    /// One row per cell, in cell-label order.
    pub winners: Vec<WinnerEntry>,
    /// Seed-mean regrets with standard errors, (cell, method) ordered.
    pub per_cell: Vec<CellMethodStat>,
}

/// Mean over evaluation contexts of the true-value gap between the best
/// agent and the one the estimated table picks (argmax ties broken toward
/// the smallest agent id, so replays are deterministic).
pub fn regret(q_hat: &Array2<f64>, truth: &TruthTable) -> Result<f64> {
    if q_hat.dim() != truth.q_eval.dim() {
        return Err(Error::MissingGridEntries(format!(
            "value table is {:?}, truth grid is {:?}",
            q_hat.dim(),
            truth.q_eval.dim()
        )));
    }
    if q_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("estimated value table"));
    }
    let mut total = 0.0;
    for (est_row, true_row) in q_hat.rows().into_iter().zip(truth.q_eval.rows()) {
        let mut pick = 0;
        for (a, &v) in est_row.iter().enumerate() {
            if v > est_row[pick] {
                pick = a;
            }
        }
        let best = true_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += best - true_row[pick];
    }
    Ok(total / q_hat.nrows() as f64)
}

/// Root mean squared error over the full (context, agent) grid.
pub fn rmse_xa(q_hat: &Array2<f64>, q_ref: &Array2<f64>) -> Result<f64> {
    if q_hat.dim() != q_ref.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_ref.nrows() * q_ref.ncols(),
            got: q_hat.nrows() * q_hat.ncols(),
        });
    }
    let n = q_hat.len() as f64;
    let sq = q_hat
        .iter()
        .zip(q_ref.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok((sq / n).sqrt())
}

/// Root mean squared error of the per-agent value means.
pub fn rmse_agent(mu_hat: &Array1<f64>, mu_ref: &Array1<f64>) -> Result<f64> {
    if mu_hat.len() != mu_ref.len() {
        return Err(Error::DimensionMismatch { expected: mu_ref.len(), got: mu_hat.len() });
    }
    let n = mu_hat.len() as f64;
    let sq = mu_hat
        .iter()
        .zip(mu_ref.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok((sq / n).sqrt())
}

/// Floor used when normalizing regret excess by a cell's best regret.
const EXCESS_FLOOR: f64 = 1e-9;

/// Ranks for one cell's seed-mean regrets: 1 = best, tied values share the
/// average of the positions they cover.
fn tied_ranks(means: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&i, &j| means[i].total_cmp(&means[j]));
    let mut ranks = vec![0.0; means.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && means[order[end + 1]] == means[order[start]] {
            end += 1;
        }
        // positions are 1-based: the group spans start+1 ..= end+1
        let shared = (start + end + 2) as f64 / 2.0;
        for &i in &order[start..=end] {
            ranks[i] = shared;
        }
        start = end + 1;
    }
    ranks
}

/// Condense per-seed reports into the cross-setting league table. Every
/// cell must carry the same method set; report order never matters.
pub fn aggregate(reports: &[CellReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to aggregate".into()));
    }
    // cell label → method → per-seed regrets
    let mut cells: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in reports {
        if !r.regret.is_finite() {
            return Err(Error::NonFinite("regret"));
        }
        cells
            .entry(r.key.label())
            .or_default()
            .entry(r.method.clone())
            .or_default()
            .push(r.regret);
    }
    // Canonical seed order makes the arithmetic exactly permutation-invariant.
    for by_method in cells.values_mut() {
        for rs in by_method.values_mut() {
            rs.sort_by(f64::total_cmp);
        }
    }
    let method_set: Vec<String> = cells.values().next().unwrap().keys().cloned().collect();
    for by_method in cells.values() {
        let this: Vec<&String> = by_method.keys().collect();
        if this.len() != method_set.len() || this.iter().zip(&method_set).any(|(a, b)| *a != b)
        {
            return Err(Error::InconsistentMethods);
        }
    }

    let mut per_cell = Vec::new();
    let mut rank_sum: BTreeMap<&String, f64> = BTreeMap::new();
    let mut top3: BTreeMap<&String, usize> = BTreeMap::new();
    let mut excess_sum: BTreeMap<&String, f64> = BTreeMap::new();
    let mut regret_sum: BTreeMap<&String, f64> = BTreeMap::new();
    let mut winners = Vec::new();

    for (cell, by_method) in &cells {
        let means: Vec<f64> = by_method
            .values()
            .map(|rs| rs.iter().sum::<f64>() / rs.len() as f64)
            .collect();
        for ((method, rs), &mean) in by_method.iter().zip(&means) {
            let se = if rs.len() > 1 {
                let var = rs.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>()
                    / (rs.len() as f64 - 1.0);
                (var / rs.len() as f64).sqrt()
            } else {
                0.0
            };
            per_cell.push(CellMethodStat {
                cell: cell.clone(),
                method: method.clone(),
                mean_regret: mean,
                se_regret: se,
                n_seeds: rs.len(),
            });
        }

        let ranks = tied_ranks(&means);
        let mut sorted = means.clone();
        sorted.sort_by(f64::total_cmp);
        let best = sorted[0];
        let cutoff = sorted[(sorted.len() - 1).min(2)];
        for ((method, &mean), &rank) in by_method.keys().zip(&means).zip(&ranks) {
            *rank_sum.entry(method).or_default() += rank;
            if mean <= cutoff {
                *top3.entry(method).or_default() += 1;
            }
            *excess_sum.entry(method).or_default() +=
                100.0 * (mean - best) / best.max(EXCESS_FLOOR);
            *regret_sum.entry(method).or_default() += mean;
        }

        // Winner: smallest mean, label order breaking exact ties; the gap is
        // measured to the next mean in sorted order.
        let win_idx = (0..means.len()).min_by(|&i, &j| means[i].total_cmp(&means[j])).unwrap();
        let gap = if sorted.len() > 1 { sorted[1] - best } else { 0.0 };
        winners.push(WinnerEntry {
            cell: cell.clone(),
            best: by_method.keys().nth(win_idx).unwrap().clone(),
            gap,
        });
    }

    let n_cells = cells.len() as f64;
    let mut methods: Vec<MethodSummary> = method_set
        .iter()
        .map(|m| MethodSummary {
            method: m.clone(),
            avg_rank: rank_sum[m] / n_cells,
            top3_count: top3.get(m).copied().unwrap_or(0),
            excess_pct: excess_sum[m] / n_cells,
            macro_regret: regret_sum[m] / n_cells,
        })
        .collect();
    methods.sort_by(|a, b| a.avg_rank.total_cmp(&b.avg_rank).then(a.method.cmp(&b.method)));
    Ok(AggregateReport { methods, winners, per_cell })
}

/// Convenience: assemble a [`CellReport`] from the pieces a runner holds.
#[allow(clippy::too_many_arguments)]
pub fn cell_report(
    seed: u64,
    key: CellKey,
    method: String,
    values: &ValueEstimate,
    truth: &TruthTable,
    chosen_hparams: BTreeMap<String, String>,
) -> Result<CellReport> {
    let reg = regret(&values.q_dm, truth)?;
    let xa = rmse_xa(&values.q_dm, &truth.q_eval)?;
    let agent = rmse_agent(&values.mu_dm, &truth.mu_eval())?;
    Ok(CellReport {
        seed,
        key,
        method,
        regret: reg,
        rmse_xa: xa,
        rmse_agent: agent,
        chosen_hparams,
        mu_dm: values.mu_dm.to_vec(),
        mu_dr: values.mu_dr.to_vec(),
    })
}
