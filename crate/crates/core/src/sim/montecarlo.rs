//! Seed batches, parameter sweeps and the CBBA-versus-hysteresis comparison.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::engine::run_simulation;
use crate::allocation::Algorithm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub fuel: f64,
    pub clipped_integral: f64,
    pub switch_count: usize,
    pub anomalies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub label: String,
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    #[serde(rename = "ci_F")]
    pub ci_f: f64,
    #[serde(rename = "mean_C")]
    pub mean_c: f64,
    #[serde(rename = "ci_C")]
    pub ci_c: f64,
    pub n_runs: usize,
}

/// Sample mean and 95% half-width `1.96 s / sqrt(n)`.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

pub fn summarize(label: &str, runs: &[RunSummary]) -> SweepSummary {
    let f: Vec<f64> = runs.iter().map(|r| r.fuel).collect();
    let c: Vec<f64> = runs.iter().map(|r| r.clipped_integral).collect();
    let (mean_f, ci_f) = mean_ci(&f);
    let (mean_c, ci_c) = mean_ci(&c);
    SweepSummary { label: label.to_string(), mean_f, ci_f, mean_c, ci_c, n_runs: runs.len() }
}

/// Runs every seed in parallel; results come back in seed order.
pub fn monte_carlo(cfg: &SimConfig, seeds: &[u64], label: &str) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let r = run_simulation(cfg, seed)?;
            Ok(RunSummary {
                label: label.to_string(),
                seed,
                fuel: r.fuel,
                clipped_integral: r.clipped_integral,
                switch_count: r.switch_count,
                anomalies: r.anomalies.budgeted(),
            })
        })
        .collect()
}

/// Parameters that can be swept from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Depth,
    Mu,
    Alpha,
    Epsilon,
    Hysteresis,
    Algorithm,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] =
        [SweepAxis::Depth, SweepAxis::Mu, SweepAxis::Alpha, SweepAxis::Epsilon, SweepAxis::Hysteresis, SweepAxis::Algorithm];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Depth => "depth",
            SweepAxis::Mu => "mu",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Hysteresis => "hysteresis",
            SweepAxis::Algorithm => "algorithm",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &SimConfig, value: &str) -> Result<SimConfig> {
        let bad = |e: &dyn fmt::Display| Error::Config(format!("bad value {value:?} for {}: {e}", self.name()));
        let num = || value.trim().parse::<f64>().map_err(|e| bad(&e));
        let mut cfg = base.clone();
        match self {
            SweepAxis::Depth => cfg.alloc.depth = value.trim().parse().map_err(|e| bad(&e))?,
            SweepAxis::Mu => cfg.alloc.mu = num()?,
            SweepAxis::Alpha => cfg.switching.alpha = num()?,
            SweepAxis::Epsilon => cfg.switching.epsilon = num()?,
            SweepAxis::Hysteresis => {
                cfg.alloc.algorithm = Algorithm::Hysteresis;
                cfg.alloc.hysteresis = num()?;
            }
            SweepAxis::Algorithm => {
                cfg.alloc.algorithm = match value.trim() {
                    "cbba" => Algorithm::Cbba,
                    "hysteresis" => Algorithm::Hysteresis,
                    other => return Err(bad(&format!("expected cbba or hysteresis, got {other}"))),
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<&str> = SweepAxis::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown sweep axis {s:?}; valid axes: {}", names.join(", ")))
        })
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One batch per value; labels are `axis=value`.
pub fn sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
) -> Result<(Vec<SweepSummary>, Vec<RunSummary>)> {
    let mut summaries = Vec::with_capacity(values.len());
    let mut all = Vec::new();
    for v in values {
        let cfg = axis.apply(base, v)?;
        let label = format!("{axis}={}", v.trim());
        let runs = monte_carlo(&cfg, seeds, &label)?;
        summaries.push(summarize(&label, &runs));
        all.extend(runs);
    }
    Ok((summaries, all))
}

/// CBBA under `base` followed by the hysteresis baseline at each dwell value.
pub fn compare(
    base: &SimConfig,
    hysteresis: &[f64],
    seeds: &[u64],
) -> Result<(Vec<SweepSummary>, Vec<RunSummary>)> {
    let mut cbba = base.clone();
    cbba.alloc.algorithm = Algorithm::Cbba;
    let runs = monte_carlo(&cbba, seeds, "cbba")?;
    let mut summaries = vec![summarize("cbba", &runs)];
    let mut all = runs;
    for &h in hysteresis {
        let cfg = SweepAxis::Hysteresis.apply(base, &h.to_string())?;
        let label = format!("hysteresis={h}");
        let runs = monte_carlo(&cfg, seeds, &label)?;
        summaries.push(summarize(&label, &runs));
        all.extend(runs);
    }
    Ok((summaries, all))
}
