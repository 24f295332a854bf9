//! Clohessy-Wiltshire-Hill relative motion about a circular-orbit chief.
//!
//! Hill frame: x radial (away from the central body), y along-track,
//! z completing the right-handed triad. States are `[r; v]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat6, Vec3, Vec6};

/// Default chief mean motion, roughly a 90 minute low Earth orbit.
pub const DEFAULT_MEAN_MOTION: f64 = 0.00113;

/// Relative position (m) and velocity (m/s) in the Hill frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillState(pub Vec6);

impl HillState {
    pub fn new(r: Vec3, v: Vec3) -> Self {
        HillState(Vec6::new(r.x, r.y, r.z, v.x, v.y, v.z))
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        HillState(Vec6::from(x))
    }

    pub fn position(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Residual of the drift-free condition `v_y = -2 eta r_x`.
    pub fn drift_residual(&self, eta: MeanMotion) -> f64 {
        self.0[4] + 2.0 * eta.get() * self.0[0]
    }
}

/// Chief angular rate (rad/s). Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MeanMotion(f64);

impl MeanMotion {
    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta > 0.0 {
            Ok(MeanMotion(eta))
        } else {
            Err(Error::invalid(format!("mean motion must be positive, got {eta}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn period(self) -> f64 {
        2.0 * std::f64::consts::PI / self.0
    }
}

impl Default for MeanMotion {
    fn default() -> Self {
        MeanMotion(DEFAULT_MEAN_MOTION)
    }
}

impl TryFrom<f64> for MeanMotion {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        MeanMotion::new(v)
    }
}

impl From<MeanMotion> for f64 {
    fn from(m: MeanMotion) -> f64 {
        m.0
    }
}

/// The linear system matrix of the CWH equations, `x_dot = A x`.
pub fn cwh_system_matrix(eta: MeanMotion) -> Mat6 {
    let n = eta.get();
    let mut a = Mat6::zeros();
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    a
}

/// Closed-form state-transition matrix `exp(A dt)`.
pub fn cwh_stm(dt: f64, eta: MeanMotion) -> Result<Mat6> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be non-negative, got {dt}")));
    }
    Ok(stm_unchecked(dt, eta.get()))
}

fn stm_unchecked(t: f64, n: f64) -> Mat6 {
    let nt = n * t;
    let (s, c) = nt.sin_cos();
    #[rustfmt::skip]
    let m = Mat6::from_row_slice(&[
        4.0 - 3.0 * c,        0.0, 0.0,    s / n,                 2.0 * (1.0 - c) / n,         0.0,
        6.0 * (s - nt),       1.0, 0.0,    -2.0 * (1.0 - c) / n,  (4.0 * s - 3.0 * nt) / n,    0.0,
        0.0,                  0.0, c,      0.0,                   0.0,                         s / n,
        3.0 * n * s,          0.0, 0.0,    c,                     2.0 * s,                     0.0,
        -6.0 * n * (1.0 - c), 0.0, 0.0,    -2.0 * s,              4.0 * c - 3.0,               0.0,
        0.0,                  0.0, -n * s, 0.0,                   0.0,                         c,
    ]);
    m
}

pub fn cwh_transition(state: &HillState, dt: f64, eta: MeanMotion) -> Result<HillState> {
    Ok(HillState(cwh_stm(dt, eta)? * state.0))
}

/// Propagates every body through the block-diagonal system `I_N (x) A`.
pub fn multi_body_transition(
    states: &[HillState],
    dt: f64,
    eta: MeanMotion,
) -> Result<Vec<HillState>> {
    if states.is_empty() {
        return Err(Error::invalid("multi-body propagation needs at least one state"));
    }
    let stm = cwh_stm(dt, eta)?;
    Ok(states.iter().map(|s| HillState(stm * s.0)).collect())
}

/// Stacked form of [`multi_body_transition`] using an explicit Kronecker product.
/// Only practical for small fleets; used to cross-check the per-body path.
pub fn stacked_transition(states: &[HillState], dt: f64, eta: MeanMotion) -> Result<DVector<f64>> {
    if states.is_empty() {
        return Err(Error::invalid("multi-body propagation needs at least one state"));
    }
    let stm = cwh_stm(dt, eta)?;
    let stm_dyn = DMatrix::from_iterator(6, 6, stm.iter().copied());
    let big = DMatrix::<f64>::identity(states.len(), states.len()).kronecker(&stm_dyn);
    let x = DVector::from_iterator(states.len() * 6, states.iter().flat_map(|s| s.0.iter().copied()));
    Ok(big * x)
}

/// Natural motion trajectory families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NmtSpec {
    /// Fixed offset along-track.
    Point { along_track: f64 },
    /// Cross-track oscillation at a fixed along-track offset.
    Line { amplitude: f64, phase: f64, along_track: f64 },
    /// Closed relative ellipse through `(r_x, r_y, r_z)`; `v_z` is free.
    Ellipse { r_x: f64, r_y: f64, r_z: f64, v_z: f64 },
}

impl NmtSpec {
    /// Ellipse through a uniformly sampled position in `[-range, range]^3`, with a
    /// cross-track rate giving an out-of-plane amplitude of up to `range`.
    pub fn random_ellipse<R: Rng + ?Sized>(rng: &mut R, range: f64, eta: MeanMotion) -> Self {
        let mut u = || rng.random_range(-range..=range);
        let (r_x, r_y, r_z) = (u(), u(), u());
        let v_z = eta.get() * u();
        NmtSpec::Ellipse { r_x, r_y, r_z, v_z }
    }
}

pub fn nmt_init(spec: &NmtSpec, eta: MeanMotion) -> Result<HillState> {
    let n = eta.get();
    let state = match *spec {
        NmtSpec::Point { along_track } => HillState::from_array([0.0, along_track, 0.0, 0.0, 0.0, 0.0]),
        NmtSpec::Line { amplitude, phase, along_track } => HillState::from_array([
            0.0,
            along_track,
            amplitude * phase.sin(),
            0.0,
            0.0,
            n * amplitude * phase.cos(),
        ]),
        NmtSpec::Ellipse { r_x, r_y, r_z, v_z } => {
            HillState::from_array([r_x, r_y, r_z, 0.5 * n * r_y, -2.0 * n * r_x, v_z])
        }
    };
    if !state.is_finite() {
        return Err(Error::invalid("NMT parameters must be finite"));
    }
    Ok(state)
}

/// Uncontrolled body whose velocity is deliberately off every closed NMT.
pub fn sample_drifting_body<R: Rng + ?Sized>(
    rng: &mut R,
    pos_range: f64,
    vel_range: f64,
    eta: MeanMotion,
) -> HillState {
    let r = Vec3::new(
        rng.random_range(-pos_range..=pos_range),
        rng.random_range(-pos_range..=pos_range),
        rng.random_range(-pos_range..=pos_range),
    );
    loop {
        let v = Vec3::new(
            rng.random_range(-vel_range..=vel_range),
            rng.random_range(-vel_range..=vel_range),
            rng.random_range(-vel_range..=vel_range),
        );
        let s = HillState::new(r, v);
        if s.drift_residual(eta).abs() > 1e-12 {
            return s;
        }
    }
}
