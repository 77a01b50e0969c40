//! Command-line surface of the workbench.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use cebench::harness::{
    read_reports, run_cell, run_sweep, write_aggregate, write_datasets, write_outputs,
    write_reports_csv, SweepConfig, SweepOutput,
};
use cebench::metrics::{aggregate, AggregateReport, CellKey};
use cebench::theory;
use cebench::Result;

#[derive(Parser)]
#[command(name = "cebench", version, about = "Simulation workbench for offline evaluation of generative-model routing under confounded logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Built-in sweep grids, used when no config file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// β × budgets grid, scalar rewards, mixture router.
    Default,
    /// 5×5 coding-reward mixture grid at one data regime, softmax router.
    Coding,
    /// Smooth vs sharpened rubric at one data regime, softmax router.
    Rubric,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Sweep configuration (TOML). Omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in grid to use when --config is not given.
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// Override the configuration's master seed.
    #[arg(long)]
    master_seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::from_toml(&fs::read_to_string(path)?)?,
            None => match self.preset {
                Preset::Default => SweepConfig::default(),
                Preset::Coding => SweepConfig::coding_preset(),
                Preset::Rubric => SweepConfig::rubric_preset(),
            },
        };
        if let Some(seed) = self.master_seed {
            cfg.master_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell × replicate of the grid and write the output directory.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 means all cores. Output bytes do not depend on
        /// this.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Re-run a single cell across all replicates and print its rows.
    RunCell {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n_obs: usize,
        #[arg(long)]
        n_exp: usize,
        /// Reward-map label (e.g. scalar, rubric_sharp, coding_af0.25_ow1.00).
        #[arg(long, default_value = "scalar")]
        mode: String,
        /// Also write the cell's files into this output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Dump one replicate's datasets (rows, pools, truth tables) as CSV.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 2000)]
        n_obs: usize,
        #[arg(long, default_value_t = 100)]
        n_exp: usize,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Recompute the aggregate tables from an existing output directory.
    Report {
        /// Directory containing cells/*.csv from a previous sweep.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the closed-form risk-identity checks; nonzero exit on violation.
    Check {
        #[arg(long, default_value_t = 2024)]
        master_seed: u64,
        /// Random instances per check.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Print the fully resolved configuration as TOML.
    PrintConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn print_league_table(agg: &AggregateReport) {
    println!("{:<16} {:>8} {:>6} {:>10} {:>13}", "method", "avg_rank", "top3", "excess_pct", "macro_regret");
    for m in &agg.methods {
        println!(
            "{:<16} {:>8.3} {:>6} {:>10.2} {:>13.6}",
            m.method, m.avg_rank, m.top3_count, m.excess_pct, m.macro_regret
        );
    }
    let mut wins: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for w in &agg.winners {
        *wins.entry(&w.best).or_default() += 1;
    }
    let wins: Vec<String> = wins.iter().map(|(m, n)| format!("{m}: {n}")).collect();
    println!("cells won: {}", wins.join(", "));
}

fn report_failures(output: &SweepOutput) {
    if !output.failures.is_empty() {
        eprintln!("{} (cell, seed, method) runs failed:", output.failures.len());
        for f in output.failures.iter().take(10) {
            eprintln!("  {} seed {} {}: {}", f.cell, f.seed, f.method, f.error);
        }
        if output.failures.len() > 10 {
            eprintln!("  … see manifest.json for the rest");
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep { config, out, threads } => {
            let cfg = config.load()?;
            let output = run_sweep(&cfg, threads)?;
            write_outputs(&out, &cfg, &output)?;
            println!(
                "{} report rows over {} cells × {} replicates → {}",
                output.reports.len(),
                cfg.cells().len(),
                cfg.seeds,
                out.display()
            );
            if !output.reports.is_empty() {
                print_league_table(&aggregate(&output.reports)?);
            }
            report_failures(&output);
            Ok(if output.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::RunCell { config, beta, n_obs, n_exp, mode, out, threads } => {
            let cfg = config.load()?;
            let key = CellKey { beta, n_obs, n_exp, mode };
            let output = run_cell(&cfg, &key, threads)?;
            let rows: Vec<&cebench::metrics::CellReport> = output.reports.iter().collect();
            write_reports_csv(std::io::stdout().lock(), &rows)?;
            if let Some(dir) = out {
                write_outputs(&dir, &cfg, &output)?;
            }
            report_failures(&output);
            Ok(if output.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Generate { config, out, beta, n_obs, n_exp, replicate } => {
            let cfg = config.load()?;
            write_datasets(&out, &cfg, beta, n_obs, n_exp, replicate)?;
            println!("wrote rows.csv, contexts.csv, truth.csv → {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { out } => {
            let reports = read_reports(&out)?;
            let agg = aggregate(&reports)?;
            write_aggregate(&out, &agg)?;
            println!("re-aggregated {} rows from {}", reports.len(), out.display());
            print_league_table(&agg);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { master_seed, instances } => {
            let checks = theory::run_all(master_seed, instances)?;
            let mut ok = true;
            for c in &checks {
                println!("{}", c.line());
                ok &= c.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::PrintConfig { config } => {
            print!("{}", config.load()?.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
