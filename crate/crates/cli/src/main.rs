//! Command-line front end for single runs, sweeps and the baseline comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use loctask::sim::montecarlo::{compare, sweep, SweepAxis};
use loctask::sim::output::{write_batch_dir, write_run_dir};
use loctask::sim::{run_simulation, RunSummary, SimConfig};

#[derive(Parser)]
#[command(name = "loctask", version, about = "Multi-agent local catalog maintenance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded scenario and write its time series and summary.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one parameter over a shared seed set.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of depth, mu, alpha, epsilon, hysteresis, algorithm.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Number of seeds; defaults to the config's seed list.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// CBBA against the hysteresis baseline at each dwell time.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0, 40.0])]
        hysteresis: Vec<f64>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Budget(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Failure> {
    let cfg = match path {
        Some(p) => SimConfig::from_file(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(SimConfig::default()),
    };
    cfg.map_err(Failure::Config)
}

fn seed_list(cfg: &SimConfig, n: Option<u64>) -> Vec<u64> {
    match n {
        Some(n) => (0..n).collect(),
        None => cfg.seeds.clone(),
    }
}

fn check_budget(cfg: &SimConfig, runs: &[RunSummary]) -> Result<(), Failure> {
    let worst = runs.iter().max_by_key(|r| r.anomalies);
    match worst {
        Some(r) if r.anomalies > cfg.anomaly_budget => Err(Failure::Budget(format!(
            "{} (seed {}) logged {} anomalies, budget is {}",
            r.label, r.seed, r.anomalies, cfg.anomaly_budget
        ))),
        _ => Ok(()),
    }
}

fn as_config(e: loctask::Error) -> Failure {
    match e {
        loctask::Error::Config(_) | loctask::Error::InvalidParameter(_) => Failure::Config(e.into()),
        other => Failure::Other(other.into()),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let run = run_simulation(&cfg, seed).map_err(as_config)?;
            write_run_dir(&run, &out).context("writing run output")?;
            println!("seed {seed}: F = {:.6}, C = {:.6}, switches = {}", run.fuel, run.clipped_integral, run.switch_count);
            let used = run.anomalies.budgeted();
            if used > cfg.anomaly_budget {
                return Err(Failure::Budget(format!("{used} anomalies logged, budget is {}", cfg.anomaly_budget)));
            }
        }
        Command::Sweep { config, axis, values, seeds, out } => {
            let cfg = load_config(config.as_deref())?;
            let axis: SweepAxis = axis.parse().map_err(as_config)?;
            let seeds = seed_list(&cfg, seeds);
            let (summary, runs) = sweep(&cfg, axis, &values, &seeds).map_err(as_config)?;
            write_batch_dir(&summary, &runs, &out).context("writing sweep output")?;
            report(&summary);
            check_budget(&cfg, &runs)?;
        }
        Command::Compare { config, hysteresis, seeds, out } => {
            let cfg = load_config(config.as_deref())?;
            let seeds = seed_list(&cfg, seeds);
            let (summary, runs) = compare(&cfg, &hysteresis, &seeds).map_err(as_config)?;
            write_batch_dir(&summary, &runs, &out).context("writing comparison output")?;
            report(&summary);
            check_budget(&cfg, &runs)?;
        }
    }
    Ok(())
}

fn report(rows: &[loctask::sim::SweepSummary]) {
    for r in rows {
        println!(
            "{:<18} F = {:>10.3} ± {:<8.3} C = {:>10.3} ± {:<8.3} (n = {})",
            r.label, r.mean_f, r.ci_f, r.mean_c, r.ci_c, r.n_runs
        );
    }
}

fn exit_code(failure: &Failure) -> u8 {
    match failure {
        Failure::Budget(_) => 2,
        Failure::Config(_) | Failure::Other(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Err(failure) = execute(Cli::parse()) else { return ExitCode::SUCCESS };
    match &failure {
        Failure::Config(e) => eprintln!("config error: {e:#}"),
        Failure::Budget(msg) => eprintln!("anomaly budget exceeded: {msg}"),
        Failure::Other(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(exit_code(&failure))
}
