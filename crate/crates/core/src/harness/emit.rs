//! Output emission and re-ingestion.
//!
//! A sweep writes a self-describing output directory:
//!
//! * `cells/<cell>.csv` — one row per (replicate, method) with regret, RMSE
//!   metrics, chosen hyperparameters, and per-agent DM/DR values;
//! * `aggregate.csv` — the cross-cell league table;
//! * `winner_map.csv` — best method and winning margin per cell;
//! * `cell_stats.csv` — seed-mean regret and its standard error per
//!   (cell, method);
//! * `selection_trace.jsonl` — one JSON record per hyperparameter selection;
//! * `manifest.json` — the resolved configuration, per-cell derived seeds,
//!   software version, file map, and any recorded failures.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-stable across runs and thread counts and parse back to exactly
//! the same values. Nothing time- or host-dependent is emitted.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::SweepConfig;
use crate::harness::runner::{FailureRecord, SweepOutput};
use crate::harness::seeds::derive_cell_seed;
use crate::metrics::{AggregateReport, CellKey, CellReport};

/// Map of one cell to its CSV file and per-replicate fit seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub cell: String,
    pub file: String,
    pub fit_seeds: Vec<u64>,
}

/// The run record written next to the data. Re-running `sweep` on the
/// embedded config reproduces every file byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: SweepConfig,
    pub cells: Vec<ManifestCell>,
    pub failures: Vec<FailureRecord>,
}

/// File-system-safe name for a cell label.
fn cell_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| match c {
            '=' => '-',
            ',' => '_',
            c if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' => c,
            _ => '!',
        })
        .collect();
    format!("{safe}.csv")
}

/// Shortest round-trip decimal form of a float.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn hparams_field(h: &BTreeMap<String, String>) -> String {
    h.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn parse_hparams(field: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for piece in field.split(';').filter(|p| !p.is_empty()) {
        if let Some((k, v)) = piece.split_once('=') {
            out.insert(k.to_string(), v.to_string());
        }
    }
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

/// Write report rows as CSV to any sink (cell files, stdout for single-cell
/// reruns).
pub fn write_reports_csv<W: std::io::Write>(sink: W, reports: &[&CellReport]) -> Result<()> {
    let n_agents = reports.first().map_or(0, |r| r.mu_dm.len());
    let mut header: Vec<String> = ["beta", "n_obs", "n_exp", "mode", "seed", "method", "regret", "rmse_xa", "rmse_agent", "hparams"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for a in 0..n_agents {
        header.push(format!("mu_dm_{a}"));
    }
    for a in 0..n_agents {
        header.push(format!("mu_dr_{a}"));
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&header)?;
    for r in reports {
        let mut rec: Vec<String> = vec![
            fmt_f64(r.key.beta),
            r.key.n_obs.to_string(),
            r.key.n_exp.to_string(),
            r.key.mode.clone(),
            r.seed.to_string(),
            r.method.clone(),
            fmt_f64(r.regret),
            fmt_f64(r.rmse_xa),
            fmt_f64(r.rmse_agent),
            hparams_field(&r.chosen_hparams),
        ];
        rec.extend(r.mu_dm.iter().map(|&v| fmt_f64(v)));
        rec.extend(r.mu_dr.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_cell_csv(path: &Path, reports: &[&CellReport]) -> Result<()> {
    write_reports_csv(fs::File::create(path)?, reports)
}

/// Write the league table, winner map, and per-cell statistics.
pub fn write_aggregate(out_dir: &Path, agg: &AggregateReport) -> Result<()> {
    let mut w = csv_writer(&out_dir.join("aggregate.csv"))?;
    w.write_record(["method", "avg_rank", "top3_count", "excess_pct", "macro_regret"])?;
    for m in &agg.methods {
        w.write_record([
            m.method.clone(),
            fmt_f64(m.avg_rank),
            m.top3_count.to_string(),
            fmt_f64(m.excess_pct),
            fmt_f64(m.macro_regret),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out_dir.join("winner_map.csv"))?;
    w.write_record(["cell", "best", "gap"])?;
    for e in &agg.winners {
        w.write_record([e.cell.clone(), e.best.clone(), fmt_f64(e.gap)])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out_dir.join("cell_stats.csv"))?;
    w.write_record(["cell", "method", "mean_regret", "se_regret", "n_seeds"])?;
    for s in &agg.per_cell {
        w.write_record([
            s.cell.clone(),
            s.method.clone(),
            fmt_f64(s.mean_regret),
            fmt_f64(s.se_regret),
            s.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a sweep's full output directory and return the manifest.
///
/// Cells appear in config grid order; rows within a cell keep execution
/// order (replicate-major, then method). The aggregate files are computed
/// from the reports in memory; [`read_reports`] + [`crate::metrics::aggregate`]
/// recovers them exactly from the CSVs alone.
pub fn write_outputs(out_dir: &Path, cfg: &SweepConfig, output: &SweepOutput) -> Result<Manifest> {
    fs::create_dir_all(out_dir.join("cells"))?;

    let mut manifest_cells = Vec::new();
    for key in cfg.cells() {
        let label = key.label();
        let rows: Vec<&CellReport> =
            output.reports.iter().filter(|r| r.key.label() == label).collect();
        if rows.is_empty() {
            continue;
        }
        let file = cell_file_name(&label);
        write_cell_csv(&out_dir.join("cells").join(&file), &rows)?;
        manifest_cells.push(ManifestCell {
            cell: label.clone(),
            file: format!("cells/{file}"),
            fit_seeds: (0..cfg.seeds).map(|rep| derive_cell_seed(cfg.master_seed, &key, rep)).collect(),
        });
    }

    if !output.reports.is_empty() {
        let agg = crate::metrics::aggregate(&output.reports)?;
        write_aggregate(out_dir, &agg)?;
    }

    let mut trace = fs::File::create(out_dir.join("selection_trace.jsonl"))?;
    for t in &output.traces {
        serde_json::to_writer(&mut trace, t)?;
        trace.write_all(b"\n")?;
    }
    trace.flush()?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        cells: manifest_cells,
        failures: output.failures.clone(),
    };
    let mut f = fs::File::create(out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    idx: &BTreeMap<&str, usize>,
    name: &str,
    path: &Path,
) -> Result<&'a str> {
    idx.get(name)
        .and_then(|&i| rec.get(i))
        .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("{}: bad {what} value {s:?}", path.display())))
}

/// Read one cell CSV back into reports.
fn read_cell_csv(path: &Path) -> Result<Vec<CellReport>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mu_dm_cols: Vec<usize> = (0..)
        .map_while(|a| idx.get(format!("mu_dm_{a}").as_str()).copied())
        .collect();
    let mu_dr_cols: Vec<usize> = (0..)
        .map_while(|a| idx.get(format!("mu_dr_{a}").as_str()).copied())
        .collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key = CellKey {
            beta: parse_num(field(&rec, &idx, "beta", path)?, "beta", path)?,
            n_obs: parse_num(field(&rec, &idx, "n_obs", path)?, "n_obs", path)?,
            n_exp: parse_num(field(&rec, &idx, "n_exp", path)?, "n_exp", path)?,
            mode: field(&rec, &idx, "mode", path)?.to_string(),
        };
        let collect_mu = |cols: &[usize]| -> Result<Vec<f64>> {
            cols.iter()
                .map(|&i| {
                    let s = rec.get(i).unwrap_or("");
                    parse_num(s, "value", path)
                })
                .collect()
        };
        out.push(CellReport {
            seed: parse_num(field(&rec, &idx, "seed", path)?, "seed", path)?,
            key,
            method: field(&rec, &idx, "method", path)?.to_string(),
            regret: parse_num(field(&rec, &idx, "regret", path)?, "regret", path)?,
            rmse_xa: parse_num(field(&rec, &idx, "rmse_xa", path)?, "rmse_xa", path)?,
            rmse_agent: parse_num(field(&rec, &idx, "rmse_agent", path)?, "rmse_agent", path)?,
            chosen_hparams: parse_hparams(field(&rec, &idx, "hparams", path)?),
            mu_dm: collect_mu(&mu_dm_cols)?,
            mu_dr: collect_mu(&mu_dr_cols)?,
        });
    }
    Ok(out)
}

/// Dump one replicate's datasets for inspection: logged rows (both sources),
/// the held-out context pools, and the exact truth tables.
///
/// Feature vectors are omitted — they are hashed and wide; what is useful on
/// disk is the causal skeleton (context, segment, action, outcomes per
/// reward map, auxiliary labels, hidden response coordinates).
pub fn write_datasets(
    out_dir: &Path,
    cfg: &SweepConfig,
    beta: f64,
    n_obs: usize,
    n_exp: usize,
    replicate: u64,
) -> Result<()> {
    use crate::scm::generate::{
        sample_context_pool, sample_exp_rows, sample_obs_rows, StreamSeeds, EVAL_ID_BASE,
        REF_ID_BASE,
    };
    use crate::scm::params::GeneratorParams;
    use crate::scm::truth::truth_tables;

    cfg.validate()?;
    let params = GeneratorParams::realize(cfg.generator.clone(), cfg.master_seed)?;
    let seeds = StreamSeeds::derive(cfg.master_seed, cfg.router, beta, replicate);
    let obs = sample_obs_rows(&params, &cfg.modes, cfg.router, beta, n_obs, seeds.obs_rows)?;
    let exp = sample_exp_rows(&params, &cfg.modes, n_exp, seeds.exp_rows)?;
    let eval_pool = sample_context_pool(&params, params.config.n_eval, EVAL_ID_BASE, seeds.eval_contexts);
    let ref_pool = sample_context_pool(&params, params.config.n_true, REF_ID_BASE, seeds.ref_contexts);
    let truth = truth_tables(&params, &cfg.modes, &eval_pool, &ref_pool, seeds.truth_sim, false)?;

    fs::create_dir_all(out_dir)?;
    let labels: Vec<String> = cfg.modes.iter().map(|m| m.label()).collect();
    let k_aux = params.config.k_aux;
    let d_hidden = params.config.phi_star_dim;

    let mut w = csv_writer(&out_dir.join("rows.csv"))?;
    let mut header = vec!["source".to_string(), "row".to_string(), "context_id".to_string(), "segment".to_string(), "action".to_string()];
    header.extend(labels.iter().map(|l| format!("y_{l}")));
    header.extend((0..d_hidden).map(|j| format!("hidden_{j}")));
    header.extend((0..k_aux).map(|j| format!("aux_{j}")));
    w.write_record(&header)?;
    for (source, rows) in [("OBS", &obs), ("EXP", &exp)] {
        for (i, r) in rows.iter().enumerate() {
            let mut rec = vec![
                source.to_string(),
                i.to_string(),
                r.context_id.to_string(),
                r.segment.to_string(),
                r.action.to_string(),
            ];
            rec.extend(r.outcomes.iter().map(|&y| fmt_f64(y)));
            rec.extend(r.hidden.iter().map(|&h| fmt_f64(h)));
            match &r.aux {
                Some(aux) => rec.extend(aux.iter().map(|&z| fmt_f64(z))),
                None => rec.extend(std::iter::repeat_n(String::new(), k_aux)),
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&out_dir.join("contexts.csv"))?;
    w.write_record(["pool", "context_id", "segment", "tokens"])?;
    for (pool, ctxs) in [("eval", &eval_pool), ("ref", &ref_pool)] {
        for c in ctxs {
            w.write_record([pool.to_string(), c.id.to_string(), c.segment.to_string(), c.tokens.len().to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&out_dir.join("truth.csv"))?;
    w.write_record(["mode", "pool", "context_id", "agent", "q"])?;
    for (t, label) in truth.iter().zip(&labels) {
        for (pool, grid, ctxs) in [("eval", &t.q_eval, &eval_pool), ("ref", &t.q_ref, &ref_pool)] {
            for (i, ctx) in ctxs.iter().enumerate() {
                for a in 0..grid.ncols() {
                    w.write_record([
                        label.clone(),
                        pool.to_string(),
                        ctx.id.to_string(),
                        a.to_string(),
                        fmt_f64(grid[[i, a]]),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load every per-cell CSV under `out_dir/cells`, in sorted file order.
pub fn read_reports(out_dir: &Path) -> Result<Vec<CellReport>> {
    let cells_dir = out_dir.join("cells");
    let mut paths: Vec<PathBuf> = fs::read_dir(&cells_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no cell files under {}", cells_dir.display())));
    }
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_cell_csv(&p)?);
    }
    Ok(out)
}
