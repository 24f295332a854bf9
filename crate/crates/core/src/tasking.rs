//! Observation-quality scoring from covariance principal axes and the
//! per-agent target switching rule with its blacklists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Catalog;
use crate::math::{max_asymmetry, Mat6, Vec3, Vec6};

/// Eigen-decomposition of a 6x6 covariance, largest variance first.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxes {
    pub axes: Vec<(f64, Vec6)>,
}

impl PrincipalAxes {
    pub fn reconstruct(&self) -> Mat6 {
        self.axes.iter().fold(Mat6::zeros(), |acc, (l, u)| acc + u * u.transpose() * *l)
    }
}

/// Eigenvalues sorted descending (stable for ties); each eigenvector's first
/// component with magnitude above 1e-12 is made positive.
pub fn principal_axes(cov: &Mat6) -> Result<PrincipalAxes> {
    let asym = max_asymmetry(cov);
    if asym > 1e-9 * cov.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = cov.symmetric_eigen();
    let mut axes: Vec<(f64, Vec6)> = (0..6)
        .map(|k| {
            let mut u: Vec6 = eig.eigenvectors.column(k).into_owned();
            if let Some(first) = u.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    u.neg_mut();
                }
            }
            (eig.eigenvalues[k], u)
        })
        .collect();
    axes.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(PrincipalAxes { axes })
}

/// Sum over principal axes of `variance * sin(angle to [r; r]) / |r|`.
pub fn observation_score(rel_pos: &Vec3, axes: &PrincipalAxes) -> Result<f64> {
    let range = rel_pos.norm();
    if !(range > 0.0) {
        return Err(Error::ZeroRange);
    }
    let stacked = Vec6::new(rel_pos.x, rel_pos.y, rel_pos.z, rel_pos.x, rel_pos.y, rel_pos.z);
    let sn = stacked.norm();
    let total: f64 = axes
        .axes
        .iter()
        .map(|(lambda, u)| {
            let c = (stacked.dot(u) / (sn * u.norm())).clamp(-1.0, 1.0);
            lambda * (1.0 - c * c).sqrt()
        })
        .sum();
    Ok(total / range)
}

/// Finite-difference score rate; a missing previous score reads as a very
/// fast decrease so a fresh target is never abandoned on its first step.
pub fn score_rate(score: f64, score_prev: Option<f64>, dt: f64) -> f64 {
    match score_prev {
        Some(prev) => (score - prev) / dt,
        None => f64::NEG_INFINITY,
    }
}

/// Rescores every catalog entry from `agent_pos`, shifting the previous score
/// aside. Returns the estimated range to each target.
pub fn score_catalog(catalog: &mut Catalog, agent_pos: &Vec3) -> Result<Vec<f64>> {
    let mut ranges = Vec::with_capacity(catalog.len());
    for entry in catalog.entries.iter_mut() {
        let rel = entry.mean.position() - agent_pos;
        let axes = principal_axes(&entry.cov)?;
        let score = match observation_score(&rel, &axes) {
            Ok(s) => s,
            Err(Error::ZeroRange) => 0.0,
            Err(e) => return Err(e),
        };
        entry.score_prev = entry.score;
        entry.score = Some(score);
        ranges.push(rel.norm());
    }
    Ok(ranges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchParams {
    /// Entropy threshold below which a target counts as well known.
    pub epsilon: f64,
    /// Switch-rate parameter; a switch needs the score rate above `-alpha / range`.
    pub alpha: f64,
}

impl Default for SwitchParams {
    fn default() -> Self {
        SwitchParams { epsilon: 5.0, alpha: 0.1 }
    }
}

impl SwitchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwitchDecision {
    pub target_switch: bool,
    pub agent_blacklisted: bool,
    /// Targets this agent may not plan for, ascending.
    pub target_blacklist: Vec<usize>,
}

/// Evaluates one agent's switching rule for the current step. The catalog must
/// already hold this step's scores (see [`score_catalog`]); `ranges` are the
/// estimated ranges returned by it.
pub fn switching_step(
    current_target: Option<usize>,
    current_in_fov: bool,
    catalog: &Catalog,
    ranges: &[f64],
    params: &SwitchParams,
    dt: f64,
) -> SwitchDecision {
    let mut decision = SwitchDecision::default();
    for (j, entry) in catalog.entries.iter().enumerate() {
        if entry.entropy < params.epsilon {
            decision.target_blacklist.push(j);
        }
    }
    let all_below = decision.target_blacklist.len() == catalog.len();
    let Some(t) = current_target else {
        return decision;
    };
    if !current_in_fov {
        decision.agent_blacklisted = true;
        return decision;
    }
    let entry = &catalog.entries[t];
    let rate = score_rate(entry.score.unwrap_or(0.0), entry.score_prev, dt);
    let range = ranges[t];
    if !all_below && range > 0.0 && rate > -params.alpha / range {
        decision.target_switch = true;
        if !decision.target_blacklist.contains(&t) {
            decision.target_blacklist.push(t);
            decision.target_blacklist.sort_unstable();
        }
    }
    decision
}
