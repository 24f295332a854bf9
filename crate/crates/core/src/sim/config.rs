use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::AllocParams;
use crate::attitude::{ControlGains, InertiaMatrix};
use crate::error::{Error, Result};
use crate::estimation::{EntropyForm, NoiseConfig};
use crate::math::mat3_from_rows;
use crate::orbit::MeanMotion;
use crate::sensor::SensorSpec;
use crate::tasking::SwitchParams;

/// Complete scenario and algorithm configuration. Every field has a default,
/// so a config file only needs the keys it overrides; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_targets: usize,
    /// Simulated time, seconds.
    pub duration: f64,
    /// Estimation / decision step, seconds.
    pub dt: f64,
    /// Attitude control updates per step.
    pub control_substeps: usize,
    /// Initial positions are uniform in `[-init_pos_range, init_pos_range]` per axis (m).
    pub init_pos_range: f64,
    /// Target initial velocities are uniform in `[-target_vel_range, target_vel_range]` per axis (m/s).
    pub target_vel_range: f64,
    /// Initial position variance (m^2) of every catalog entry.
    pub init_pos_var: f64,
    /// Initial velocity variance (m^2/s^2) of every catalog entry.
    pub init_vel_var: f64,
    pub eta: MeanMotion,
    pub sensor: SensorSpec,
    pub noise: NoiseConfig,
    #[serde(rename = "switch")]
    pub switching: SwitchParams,
    pub alloc: AllocParams,
    pub gains: ControlGains,
    /// Agent inertia, row-major (kg m^2).
    pub inertia: [[f64; 3]; 3],
    /// Optional per-axis body torque limit (N m).
    pub torque_limit: Option<f64>,
    pub entropy_form: EntropyForm,
    /// Broadcast every measurement to all agents.
    pub share_measurements: bool,
    /// Drive the true target motion with process noise drawn from the filter's Q.
    pub truth_process_noise: bool,
    /// Start estimates at a draw from the initial covariance instead of the truth.
    pub init_estimate_error: bool,
    /// Tolerated runtime anomalies (skipped updates, fallback torques, allocation cap hits).
    pub anomaly_budget: usize,
    pub seeds: Vec<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 2,
            n_targets: 8,
            duration: 200.0,
            dt: 1.0,
            control_substeps: 20,
            init_pos_range: 100.0,
            target_vel_range: 0.5,
            init_pos_var: 10.0,
            init_vel_var: 1e-3,
            eta: MeanMotion::default(),
            sensor: SensorSpec::default(),
            noise: NoiseConfig::default(),
            switching: SwitchParams::default(),
            alloc: AllocParams::default(),
            gains: ControlGains::default(),
            inertia: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            torque_limit: None,
            entropy_form: EntropyForm::FullLogDet,
            share_measurements: true,
            truth_process_noise: false,
            init_estimate_error: false,
            anomaly_budget: 1000,
            seeds: (0..100).collect(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn inertia_matrix(&self) -> Result<InertiaMatrix> {
        InertiaMatrix::new(mat3_from_rows(&self.inertia))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_agents == 0 {
            return bad("n_agents must be at least 1".into());
        }
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return bad("duration and dt must be positive".into());
        }
        let ratio = self.duration / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("duration {} is not a whole number of steps of {}", self.duration, self.dt));
        }
        if self.control_substeps == 0 {
            return bad("control_substeps must be at least 1".into());
        }
        if !(self.init_pos_range > 0.0) || !(self.target_vel_range >= 0.0) {
            return bad("position and velocity ranges must be positive".into());
        }
        if !(self.init_pos_var > 0.0) || !(self.init_vel_var > 0.0) {
            return bad("initial variances must be positive".into());
        }
        if let Some(limit) = self.torque_limit {
            if !(limit > 0.0) {
                return bad("torque_limit must be positive".into());
            }
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.sensor.validate().map_err(wrap)?;
        self.noise.validate().map_err(wrap)?;
        self.switching.validate().map_err(wrap)?;
        self.alloc.validate().map_err(wrap)?;
        self.gains.validate().map_err(wrap)?;
        self.inertia_matrix().map_err(wrap)?;
        Ok(())
    }
}
