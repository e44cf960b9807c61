//! Unit-quaternion helpers: log/exp maps and the `[w, x, y, z]` wire layout.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Quat = UnitQuaternion<f64>;

/// Tolerance on |q| for a quaternion to count as unit.
pub const UNIT_TOL: f64 = 1e-9;

/// Builds a quaternion from `[w, x, y, z]`, requiring unit norm within [`UNIT_TOL`].
pub fn from_wxyz(q: [f64; 4]) -> Result<Quat> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid("zero-norm quaternion"));
    }
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("quaternion norm {norm} is not unit")));
    }
    Ok(UnitQuaternion::new_unchecked(raw))
}

/// Normalizes any non-zero quaternion given as `[w, x, y, z]`.
pub fn normalized_wxyz(q: [f64; 4]) -> Result<Quat> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = raw.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid("zero-norm quaternion"));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

pub fn to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotation vector of a unit quaternion, with angle in `[0, π]`.
pub fn log_map(q: &Quat) -> Vector3<f64> {
    // q and -q are the same rotation; pick the hemisphere with w >= 0.
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let sin_half = v.norm();
    if sin_half < 1e-12 {
        // atan2(s, w) / s -> 1 / w as s -> 0
        return v * (2.0 / w);
    }
    let angle = 2.0 * sin_half.atan2(w);
    v * (angle / sin_half)
}

pub fn exp_map(r: &Vector3<f64>) -> Quat {
    let angle = r.norm();
    if angle < 1e-12 {
        let raw = Quaternion::new(1.0, 0.5 * r.x, 0.5 * r.y, 0.5 * r.z);
        return UnitQuaternion::new_normalize(raw);
    }
    let (s, c) = (0.5 * angle).sin_cos();
    let axis = r / angle;
    UnitQuaternion::new_normalize(Quaternion::new(c, s * axis.x, s * axis.y, s * axis.z))
}

/// Rotation vector taking `q_from` to `q_to`: `log(q_to ⊗ q_from⁻¹)`.
///
/// The spatial-frame convention matters: `exp(result) ⊗ q_from == q_to`.
pub fn orientation_displacement(q_from: &Quat, q_to: &Quat) -> Result<Vector3<f64>> {
    for q in [q_from, q_to] {
        let n = q.quaternion().norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("zero-norm quaternion"));
        }
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("quaternion norm {n} is not unit")));
        }
    }
    Ok(log_map(&(q_to * q_from.inverse())))
}

/// Spherical interpolation that always takes the short arc.
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    let d = log_map(&(b * a.inverse()));
    exp_map(&(d * t)) * a
}
