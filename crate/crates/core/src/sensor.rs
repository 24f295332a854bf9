//! Limited field-of-view line-of-sight sensor.

use nalgebra::{Cholesky, Matrix3x6};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{angle_between, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    /// Full cone angle, radians.
    pub fov: f64,
    /// Line-of-sight measurement noise covariance, row-major.
    pub noise_cov: [[f64; 3]; 3],
    /// Boresight direction in body axes.
    pub boresight_body: [f64; 3],
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            fov: 10f64.to_radians(),
            noise_cov: [[1e-4, 0.0, 0.0], [0.0, 1e-4, 0.0], [0.0, 0.0, 1e-4]],
            boresight_body: [1.0, 0.0, 0.0],
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::invalid(format!("fov must lie in (0, pi), got {}", self.fov)));
        }
        crate::math::check_spd3(&self.noise_cov(), "sensor noise covariance")?;
        let b = Vec3::from(self.boresight_body);
        if (b.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("boresight must be a unit vector"));
        }
        Ok(())
    }

    pub fn noise_cov(&self) -> Mat3 {
        crate::math::mat3_from_rows(&self.noise_cov)
    }

    pub fn boresight(&self) -> Vec3 {
        Vec3::from(self.boresight_body)
    }
}

/// True when the target lies within the half-cone around the boresight.
pub fn in_fov(boresight: &Vec3, rel_pos: &Vec3, fov: f64) -> Result<bool> {
    if !(rel_pos.norm() > 0.0) {
        return Err(Error::ZeroRange);
    }
    Ok(angle_between(boresight, rel_pos) <= fov / 2.0)
}

pub fn unit_los(rel_pos: &Vec3) -> Result<Vec3> {
    let n = rel_pos.norm();
    if !(n > 0.0) {
        return Err(Error::ZeroRange);
    }
    Ok(rel_pos / n)
}

/// Noisy unit line of sight; the noise is additive and the result is not renormalized.
pub fn measure_los<R: Rng + ?Sized>(rel_pos: &Vec3, noise_cov: &Mat3, rng: &mut R) -> Result<Vec3> {
    let u = unit_los(rel_pos)?;
    let w = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    if noise_cov.iter().all(|&c| c == 0.0) {
        return Ok(u);
    }
    let chol = Cholesky::new(*noise_cov).ok_or(Error::NotPositiveDefinite)?;
    Ok(u + chol.l() * w)
}

/// Jacobian of the unit line of sight with respect to the 6-state of the target.
pub fn los_jacobian(rel_pos: &Vec3) -> Result<Matrix3x6<f64>> {
    let u = unit_los(rel_pos)?;
    let block = (Mat3::identity() - u * u.transpose()) / rel_pos.norm();
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
    Ok(h)
}
