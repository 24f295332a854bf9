//! Per-agent target catalogs: Kalman prediction under CWH dynamics,
//! extended line-of-sight updates, and entropy bookkeeping.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{check_spd3, mat3_from_rows, mat6_from_rows, symmetrize, Mat3, Mat6, Vec3};
use crate::orbit::{cwh_stm, HillState, MeanMotion};
use crate::sensor::{los_jacobian, unit_los};

const STATE_DIM: f64 = 6.0;

/// How the log-determinant enters the entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyForm {
    /// `(n/2)(1 + ln 2pi) + ln|P|`
    #[default]
    FullLogDet,
    /// `(n/2)(1 + ln 2pi) + (1/2) ln|P|`, the differential entropy of a Gaussian.
    HalfLogDet,
}

pub fn log_det_spd(cov: &Mat6) -> Result<f64> {
    let chol = Cholesky::new(*cov).ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn shannon_entropy(cov: &Mat6, form: EntropyForm) -> Result<f64> {
    let base = STATE_DIM / 2.0 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    let ld = log_det_spd(cov)?;
    Ok(match form {
        EntropyForm::FullLogDet => base + ld,
        EntropyForm::HalfLogDet => base + 0.5 * ld,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Process noise added per prediction step, row-major 6x6.
    pub process_cov: [[f64; 6]; 6],
    /// Filter measurement noise, row-major 3x3.
    pub meas_cov: [[f64; 3]; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let mut q = [[0.0; 6]; 6];
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 1e-3;
        }
        NoiseConfig { process_cov: q, meas_cov: [[1e-4, 0.0, 0.0], [0.0, 1e-4, 0.0], [0.0, 0.0, 1e-4]] }
    }
}

impl NoiseConfig {
    pub fn q(&self) -> Mat6 {
        mat6_from_rows(&self.process_cov)
    }

    pub fn r(&self) -> Mat3 {
        mat3_from_rows(&self.meas_cov)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if (q - q.transpose()).abs().max() > 1e-12 {
            return Err(Error::invalid("process noise must be symmetric"));
        }
        if q.symmetric_eigenvalues().iter().any(|&l| l < -1e-15) {
            return Err(Error::invalid("process noise must be positive semidefinite"));
        }
        check_spd3(&self.r(), "measurement noise")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub mean: HillState,
    pub cov: Mat6,
    pub entropy: f64,
    /// Observation score from the owning agent's perspective, last evaluation.
    pub score: Option<f64>,
    pub score_prev: Option<f64>,
    pub blacklisted: bool,
}

impl CatalogEntry {
    pub fn new(mean: HillState, cov: Mat6, form: EntropyForm) -> Result<Self> {
        let entropy = shannon_entropy(&cov, form)?;
        Ok(CatalogEntry { mean, cov, entropy, score: None, score_prev: None, blacklisted: false })
    }

    fn with_cov(&self, mean: HillState, cov: Mat6, form: EntropyForm) -> Result<Self> {
        let entropy = shannon_entropy(&cov, form)?;
        Ok(CatalogEntry { mean, cov, entropy, ..self.clone() })
    }
}

/// One agent's estimates of every tracked body, indexed by target id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.entropy).collect()
    }
}

pub fn kf_predict(entry: &CatalogEntry, dt: f64, eta: MeanMotion, q: &Mat6, form: EntropyForm) -> Result<CatalogEntry> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("prediction step must be positive, got {dt}")));
    }
    let stm = cwh_stm(dt, eta)?;
    let mean = HillState(stm * entry.mean.0);
    let cov = symmetrize(&(stm * entry.cov * stm.transpose() + q));
    entry.with_cov(mean, cov, form)
}

/// Extended update with a unit line-of-sight measurement taken from `observer_pos`.
/// Covariance uses the Joseph form.
pub fn kf_update(
    entry: &CatalogEntry,
    z: &Vec3,
    observer_pos: &Vec3,
    r: &Mat3,
    form: EntropyForm,
) -> Result<CatalogEntry> {
    let rel = entry.mean.position() - observer_pos;
    let predicted = unit_los(&rel)?;
    let h = los_jacobian(&rel)?;
    let p = entry.cov;
    let s = h * p * h.transpose() + r;
    let s_inv = Cholesky::new(s).ok_or(Error::NotPositiveDefinite)?.inverse();
    let k = p * h.transpose() * s_inv;
    let innovation = z - predicted;
    let mean = HillState(entry.mean.0 + k * innovation);
    let ikh = Mat6::identity() - k * h;
    let cov = symmetrize(&(ikh * p * ikh.transpose() + k * r * k.transpose()));
    entry.with_cov(mean, cov, form)
}

/// Outcome of broadcasting one raw measurement to every agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShareReport {
    pub applied: usize,
    pub skipped: usize,
}

/// Applies a measurement of `target` taken by an observer at `observer_pos` to
/// every catalog in `catalogs`, in ascending agent order.
pub fn share_measurement(
    catalogs: &mut [Catalog],
    observer_pos: &Vec3,
    target: usize,
    z: &Vec3,
    r: &Mat3,
    form: EntropyForm,
) -> Result<ShareReport> {
    let mut report = ShareReport::default();
    for cat in catalogs.iter_mut() {
        let entry = cat
            .entries
            .get(target)
            .ok_or_else(|| Error::invalid(format!("unknown target id {target}")))?;
        match kf_update(entry, z, observer_pos, r, form) {
            Ok(updated) => {
                cat.entries[target] = updated;
                report.applied += 1;
            }
            Err(Error::ZeroRange) => {
                log::debug!("skipped update of target {target}: zero predicted range");
                report.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::math::Vec6;

    fn initial_cov() -> Mat6 {
        Mat6::from_diagonal(&Vec6::new(10.0, 10.0, 10.0, 1e-3, 1e-3, 1e-3))
    }

    fn entry() -> CatalogEntry {
        let mean = HillState::from_array([40.0, -20.0, 15.0, 0.1, -0.05, 0.2]);
        CatalogEntry::new(mean, initial_cov(), EntropyForm::FullLogDet).unwrap()
    }

    #[test]
    fn entropy_values() {
        let base = 3.0 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(shannon_entropy(&Mat6::identity(), EntropyForm::FullLogDet).unwrap(), base);
        assert_relative_eq!(base, 8.513631199228036, epsilon = 1e-12);
        let e0 = shannon_entropy(&initial_cov(), EntropyForm::FullLogDet).unwrap();
        // direct diagonal evaluation
        let direct = base + 3.0 * 10f64.ln() + 3.0 * 1e-3f64.ln();
        assert_relative_eq!(e0, direct, epsilon = 1e-12);
        assert_relative_eq!(e0, -5.301879, epsilon = 1e-6);
        let half = shannon_entropy(&initial_cov(), EntropyForm::HalfLogDet).unwrap();
        assert_relative_eq!(half, base + 0.5 * (direct - base), epsilon = 1e-12);
        assert_eq!(shannon_entropy(&-Mat6::identity(), EntropyForm::FullLogDet), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn predict_without_noise_preserves_log_det() {
        let e = entry();
        let p = kf_predict(&e, 10.0, MeanMotion::default(), &Mat6::zeros(), EntropyForm::FullLogDet).unwrap();
        assert!((p.entropy - e.entropy).abs() < 1e-9);
        let tiny = kf_predict(&e, 1e-12, MeanMotion::default(), &Mat6::zeros(), EntropyForm::FullLogDet).unwrap();
        assert!((tiny.cov - e.cov).amax() < 1e-12);
        assert!(kf_predict(&e, 0.0, MeanMotion::default(), &Mat6::zeros(), EntropyForm::FullLogDet).is_err());
    }

    #[test]
    fn predict_with_noise_increases_entropy() {
        let e = entry();
        let q = NoiseConfig::default().q();
        let p = kf_predict(&e, 1.0, MeanMotion::default(), &q, EntropyForm::FullLogDet).unwrap();
        assert!(p.entropy > e.entropy);
    }

    #[test]
    fn zero_innovation_update() {
        let e = entry();
        let obs = Vec3::new(-10.0, 5.0, 0.0);
        let z = unit_los(&(e.mean.position() - obs)).unwrap();
        let u = kf_update(&e, &z, &obs, &NoiseConfig::default().r(), EntropyForm::FullLogDet).unwrap();
        assert_eq!(u.mean, e.mean);
        assert!(u.entropy < e.entropy);
        let shrink = e.cov - u.cov;
        assert!(shrink.symmetric_eigenvalues().iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn update_at_zero_range_is_rejected() {
        let e = entry();
        let r = NoiseConfig::default().r();
        assert_eq!(kf_update(&e, &Vec3::x(), &e.mean.position(), &r, EntropyForm::FullLogDet), Err(Error::ZeroRange));
    }

    #[test]
    fn sharing_keeps_catalogs_identical() {
        let base = Catalog { entries: vec![entry(), entry()] };
        let mut cats = vec![base.clone(), base.clone()];
        let r = NoiseConfig::default().r();
        let z = Vec3::new(0.8, -0.3, 0.5).normalize();
        let rep = share_measurement(&mut cats, &Vec3::zeros(), 1, &z, &r, EntropyForm::FullLogDet).unwrap();
        assert_eq!(rep, ShareReport { applied: 2, skipped: 0 });
        assert_eq!(cats[0], cats[1]);
        assert_ne!(cats[0], base);
        assert_eq!(cats[0].entries[0], base.entries[0]);
        assert!(share_measurement(&mut cats, &Vec3::zeros(), 7, &z, &r, EntropyForm::FullLogDet).is_err());
    }

    #[test]
    fn noise_config_validation() {
        assert!(NoiseConfig::default().validate().is_ok());
        let mut bad = NoiseConfig::default();
        bad.meas_cov[0][0] = 0.0;
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn entropy_scaling_law(c in 1e-3f64..1e3) {
                let p = initial_cov();
                let d = shannon_entropy(&(p * c), EntropyForm::FullLogDet).unwrap()
                    - shannon_entropy(&p, EntropyForm::FullLogDet).unwrap();
                prop_assert!((d - 6.0 * c.ln()).abs() < 1e-9);
            }

            #[test]
            fn update_never_raises_entropy(
                obs in prop::array::uniform3(-100.0f64..100.0),
                noise in prop::array::uniform3(-0.05f64..0.05),
            ) {
                let e = entry();
                let obs = Vec3::from(obs);
                let rel = e.mean.position() - obs;
                prop_assume!(rel.norm() > 1.0);
                let z = rel.normalize() + Vec3::from(noise);
                let u = kf_update(&e, &z, &obs, &NoiseConfig::default().r(), EntropyForm::FullLogDet).unwrap();
                prop_assert!(u.entropy <= e.entropy + 1e-9);
                prop_assert!((u.cov - u.cov.transpose()).amax() <= 1e-10);
                prop_assert!(u.cov.symmetric_eigenvalues().min() > 0.0);
            }
        }
    }
}
