//! CSV and JSON writers for run results.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::RunResult;
use super::montecarlo::{RunSummary, SweepSummary};
use crate::error::Result;

pub const TIMESERIES_HEADER: [&str; 9] =
    ["step", "time", "agent", "target", "entropy", "score", "torque_norm", "assigned_target", "in_fov"];

/// One row per `(step, agent, target)`. `assigned_target` is empty when the
/// agent holds no target.
pub fn write_timeseries<W: Write>(run: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMESERIES_HEADER)?;
    for step in 0..=run.n_steps {
        let time = step as f64 * run.dt;
        for (i, per_target) in run.entropy.iter().enumerate() {
            let assigned = run.assigned[i][step].map(|t| t.to_string()).unwrap_or_default();
            for (j, ent) in per_target.iter().enumerate() {
                w.write_record([
                    step.to_string(),
                    time.to_string(),
                    i.to_string(),
                    j.to_string(),
                    ent[step].to_string(),
                    run.score[i][j][step].to_string(),
                    run.torque_norm[i][step].to_string(),
                    assigned.clone(),
                    u8::from(run.in_fov[i][j][step]).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub fuel: f64,
    pub clipped_integral: f64,
    pub switch_count: usize,
    pub anomalies: super::engine::Anomalies,
}

impl From<&RunResult> for RunReport {
    fn from(r: &RunResult) -> Self {
        RunReport {
            seed: r.seed,
            fuel: r.fuel,
            clipped_integral: r.clipped_integral,
            switch_count: r.switch_count,
            anomalies: r.anomalies,
        }
    }
}

pub fn write_run_summary<W: Write>(run: &RunResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &RunReport::from(run)).map_err(|e| crate::Error::Io(e.to_string()))
}

/// Writes `timeseries.csv` and `summary.json` into `dir`.
pub fn write_run_dir(run: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_timeseries(run, std::fs::File::create(dir.join("timeseries.csv"))?)?;
    write_run_summary(run, std::fs::File::create(dir.join("summary.json"))?)?;
    Ok(())
}

/// Header `label,mean_F,ci_F,mean_C,ci_C,n_runs`.
pub fn write_sweep_summary<W: Write>(rows: &[SweepSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-run metrics: `label,seed,fuel,clipped_integral,switch_count`.
pub fn write_runs<W: Write>(rows: &[RunSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.csv` and `runs.csv` into `dir`.
pub fn write_batch_dir(summary: &[SweepSummary], runs: &[RunSummary], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_sweep_summary(summary, std::fs::File::create(dir.join("summary.csv"))?)?;
    write_runs(runs, std::fs::File::create(dir.join("runs.csv"))?)?;
    Ok(())
}
