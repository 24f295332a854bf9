//! Scenario configuration, closed-loop engine, metrics and batch runs.

pub mod config;
pub mod engine;
pub mod metrics;
pub mod montecarlo;
pub mod output;

pub use config::SimConfig;
pub use engine::{run_simulation, Anomalies, Event, EventKind, RunResult};
pub use metrics::{clipped_integral_metric, fuel_metric};
pub use montecarlo::{compare, monte_carlo, sweep, RunSummary, SweepAxis, SweepSummary};
