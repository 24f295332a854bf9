//! Rigid-body attitude kinematics, Euler's equations, and the
//! proportional-plus-damping tracking law used to point each sensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{angle_between, orthonormalize, rot_x, rot_y, rot_z, skew, Mat3, Vec3};

/// Default keep-out margin from pitch = +/-pi/2 for Euler-rate evaluation.
pub const DEFAULT_GIMBAL_MARGIN: f64 = 1e-6;

/// Agent attitude. The rotation matrix is the integrated quantity; the Euler
/// angles (yaw, pitch, roll) are derived from it after every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeState {
    pub euler: Vec3,
    /// Body to inertial.
    pub rotation: Mat3,
    /// Angular velocity of the body relative to inertial, body components.
    pub rate: Vec3,
}

impl AttitudeState {
    pub fn identity() -> Self {
        Self::from_rotation(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_rotation(rotation: Mat3, rate: Vec3) -> Self {
        AttitudeState { euler: euler_from_rotation(&rotation), rotation, rate }
    }

    pub fn from_euler(euler: Vec3, rate: Vec3) -> Self {
        AttitudeState { euler, rotation: rotation_from_euler(&euler), rate }
    }
}

/// Body-to-inertial rotation for yaw/pitch/roll angles under the ZYX sequence,
/// `R = R_x(roll)^T R_y(pitch)^T R_z(yaw)^T`.
pub fn rotation_from_euler(euler: &Vec3) -> Mat3 {
    (rot_z(euler[0]) * rot_y(euler[1]) * rot_x(euler[2])).transpose()
}

pub fn euler_from_rotation(r_body_to_inertial: &Mat3) -> Vec3 {
    let a = r_body_to_inertial.transpose();
    let yaw = a[(1, 0)].atan2(a[(0, 0)]);
    let pitch = (-a[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = a[(2, 1)].atan2(a[(2, 2)]);
    Vec3::new(yaw, pitch, roll)
}

/// Euler-angle rates for the given body rates.
pub fn euler_rates(euler: &Vec3, rate: &Vec3, margin: f64) -> Result<Vec3> {
    let (sf, cf) = euler[0].sin_cos();
    let pitch = euler[1];
    let cp = pitch.cos();
    if cp.abs() <= margin.sin() {
        return Err(Error::Singularity { pitch, margin });
    }
    let tp = pitch.tan();
    #[rustfmt::skip]
    let m = Mat3::new(
        -cf * tp, -sf * tp, -1.0,
        sf,       -cf,      0.0,
        -cf / cp, -sf / cp, 0.0,
    );
    Ok(m * rate)
}

/// Time derivative of the body-to-inertial rotation.
pub fn rotation_kinematics(rotation: &Mat3, rate: &Vec3) -> Mat3 {
    rotation * skew(rate)
}

/// Symmetric positive-definite inertia matrix with its inverse cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaMatrix {
    j: Mat3,
    j_inv: Mat3,
}

impl InertiaMatrix {
    pub fn new(j: Mat3) -> Result<Self> {
        let asym = (j - j.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::invalid(format!("inertia not symmetric (asymmetry {asym:e})")));
        }
        if j.symmetric_eigenvalues().iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("inertia must be positive definite"));
        }
        let j_inv = j.try_inverse().ok_or_else(|| Error::invalid("singular inertia"))?;
        Ok(InertiaMatrix { j, j_inv })
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(a, b, c)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.j
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.j_inv
    }

    pub fn kinetic_energy(&self, rate: &Vec3) -> f64 {
        0.5 * rate.dot(&(self.j * rate))
    }
}

impl Default for InertiaMatrix {
    fn default() -> Self {
        InertiaMatrix { j: Mat3::identity(), j_inv: Mat3::identity() }
    }
}

/// Euler's rigid-body equation for the body rate relative to inertial.
pub fn body_rates_derivative(rate: &Vec3, torque: &Vec3, inertia: &InertiaMatrix) -> Vec3 {
    let j_inv = inertia.inverse();
    -j_inv * rate.cross(&(inertia.matrix() * rate)) + j_inv * torque
}

/// Rate of change of the body rate relative to the Hill frame, given the Hill
/// frame's inertial rate expressed in body components.
pub fn hill_relative_rates_derivative(
    rate_hb: &Vec3,
    rate_ih: &Vec3,
    torque: &Vec3,
    inertia: &InertiaMatrix,
) -> Vec3 {
    let j = inertia.matrix();
    let j_inv = inertia.inverse();
    let gyro = rate_hb.cross(&(j * rate_hb))
        + rate_hb.cross(&(j * rate_ih))
        + rate_ih.cross(&(j * rate_hb))
        + rate_ih.cross(&(j * rate_ih));
    -j_inv * gyro + rate_hb.cross(rate_ih) + j_inv * torque
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlGains {
    pub k_p: f64,
    pub k_d: f64,
    pub axis: PointingAxis,
}

/// Direction (and length) of the proportional torque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointingAxis {
    /// `r_s x r/|r|`, whose length is `sin(alpha)`.
    Cross,
    /// The same direction scaled to unit length.
    #[default]
    Unit,
}

impl ControlGains {
    pub fn new(k_p: f64, k_d: f64) -> Result<Self> {
        let g = ControlGains { k_p, k_d, axis: PointingAxis::Cross };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_p > 0.0 && self.k_d > 0.0 && self.k_p.is_finite() && self.k_d.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("gains must be positive, got k_p={} k_d={}", self.k_p, self.k_d)))
        }
    }
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains { k_p: 20.0, k_d: 10.0, axis: PointingAxis::Unit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingCommand {
    pub torque: Vec3,
    /// Angle between boresight and line of sight.
    pub pointing_error: f64,
    /// Apparent angular velocity of the target.
    pub target_rate: Vec3,
    /// Set when boresight and line of sight were antiparallel.
    pub used_fallback: bool,
}

/// Proportional-plus-damping pointing law. All vectors share one frame;
/// `body_axes` holds the agent's body axes (as columns) in that frame and is
/// only consulted when the boresight points directly away from the target.
pub fn pd_tracking_torque(
    boresight: &Vec3,
    rel_pos: &Vec3,
    rel_vel: &Vec3,
    rate: &Vec3,
    gains: &ControlGains,
    body_axes: &Mat3,
) -> Result<TrackingCommand> {
    let range = rel_pos.norm();
    if !(range > 0.0) {
        return Err(Error::ZeroRange);
    }
    if (boresight.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("boresight must be a unit vector"));
    }
    let los = rel_pos / range;
    let pointing_error = angle_between(boresight, &los);
    let target_rate = rel_pos.cross(rel_vel) / (range * range);
    let mut axis = boresight.cross(&los);
    let mut used_fallback = false;
    if axis.norm() < 1e-12 && pointing_error > std::f64::consts::FRAC_PI_2 {
        // Antiparallel: rotate about the body axis most perpendicular to the boresight.
        let pick = (0..3)
            .min_by(|&a, &b| {
                let da = body_axes.column(a).dot(boresight).abs();
                let db = body_axes.column(b).dot(boresight).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        let c: Vec3 = body_axes.column(pick).into_owned();
        axis = (c - boresight * c.dot(boresight)).normalize();
        used_fallback = true;
    }
    if gains.axis == PointingAxis::Unit && !used_fallback && axis.norm() > 0.0 {
        axis.normalize_mut();
    }
    let torque = axis * (gains.k_p * pointing_error) + (target_rate - rate) * gains.k_d;
    Ok(TrackingCommand { torque, pointing_error, target_rate, used_fallback })
}

fn attitude_rhs(rotation: &Mat3, rate: &Vec3, torque: &Vec3, inertia: &InertiaMatrix) -> (Mat3, Vec3) {
    (rotation_kinematics(rotation, rate), body_rates_derivative(rate, torque, inertia))
}

/// One RK4 step of the rotational kinematics and dynamics under a constant
/// body-frame torque, followed by re-orthonormalization.
pub fn integrate_attitude(
    state: &AttitudeState,
    torque_body: &Vec3,
    inertia: &InertiaMatrix,
    dt: f64,
) -> Result<AttitudeState> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("attitude step must be positive, got {dt}")));
    }
    let (r0, w0) = (state.rotation, state.rate);
    let (k1r, k1w) = attitude_rhs(&r0, &w0, torque_body, inertia);
    let (k2r, k2w) = attitude_rhs(&(r0 + k1r * (dt / 2.0)), &(w0 + k1w * (dt / 2.0)), torque_body, inertia);
    let (k3r, k3w) = attitude_rhs(&(r0 + k2r * (dt / 2.0)), &(w0 + k2w * (dt / 2.0)), torque_body, inertia);
    let (k4r, k4w) = attitude_rhs(&(r0 + k3r * dt), &(w0 + k3w * dt), torque_body, inertia);
    let r = r0 + (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (dt / 6.0);
    let w = w0 + (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (dt / 6.0);
    Ok(AttitudeState::from_rotation(orthonormalize(&r), w))
}
