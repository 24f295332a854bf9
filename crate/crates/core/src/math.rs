//! Small linear-algebra helpers shared by the dynamics and estimation code.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Angle between two nonzero vectors, robust near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Project a near-rotation back onto SO(3) (polar decomposition via SVD).
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

pub fn mat3_from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

pub fn mat6_from_rows(rows: &[[f64; 6]; 6]) -> Mat6 {
    Mat6::from_fn(|i, j| rows[i][j])
}

pub fn check_spd3(m: &Mat3, what: &str) -> crate::Result<()> {
    if (m - m.transpose()).abs().max() > 1e-12 {
        return Err(crate::Error::invalid(format!("{what} must be symmetric")));
    }
    if nalgebra::Cholesky::new(*m).is_none() {
        return Err(crate::Error::invalid(format!("{what} must be positive definite")));
    }
    Ok(())
}

pub fn max_asymmetry(m: &Mat6) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn symmetrize(m: &Mat6) -> Mat6 {
    (m + m.transpose()) * 0.5
}

/// Elementary rotations; `rot_z(a) * v` rotates `v` by `a` about +z.
pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
