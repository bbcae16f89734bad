//! Quaternion algebra and the multivariable signed power.
//!
//! Quaternions are Hamilton, scalar-first `[w, x, y, z]`, and rotate body
//! vectors into the world (north-east-down) frame.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on `|‖q‖ - 1|` accepted by operations that require a unit quaternion.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quat {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    /// Rotation of `angle` radians about the unit `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n * s;
        Self::new(c, a.x, a.y, a.z)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn negated(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn product(&self, rhs: &Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Small-angle rotation vector `2·sign(w)·vec(q)`; exact direction, angle
    /// accurate to first order.
    pub fn small_angle(&self) -> Vec3 {
        let s = if self.w < 0.0 { -2.0 } else { 2.0 };
        self.vector_part() * s
    }

    /// Yaw of the Z-Y-X Euler decomposition.
    pub fn yaw(&self) -> f64 {
        let r = rotation_unchecked(self);
        r[(1, 0)].atan2(r[(0, 0)])
    }
}

/// Multivariable signed power `‖x‖^a · x/‖x‖`, with the zero vector mapped to zero
/// for every exponent (including the signum case `a = 0`).
pub fn signed_power(x: &Vec3, a: f64) -> Vec3 {
    let n = x.norm();
    if n == 0.0 {
        return Vec3::zeros();
    }
    if a == 1.0 {
        return *x;
    }
    x * (n.powf(a) / n)
}

fn check_unit(q: &Quat) -> Result<()> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput(format!(
            "quaternion norm {n} is not unit within {UNIT_TOL}"
        )));
    }
    Ok(())
}

/// Body-to-world rotation matrix, evaluated entry-wise without a norm check.
/// The prediction model uses this form on slightly non-unit quaternions.
pub fn rotation_unchecked(q: &Quat) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Matrix3::new(
        1.0 - 2.0 * y * y - 2.0 * z * z,
        2.0 * (x * y - w * z),
        2.0 * (w * y + x * z),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * x * x - 2.0 * z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * x * x - 2.0 * y * y,
    )
}

pub fn quat_to_rotation(q: &Quat) -> Result<Matrix3<f64>> {
    check_unit(q)?;
    Ok(rotation_unchecked(q))
}

/// World-frame direction of the body z axis, `R(q)·e_z`, and its Jacobian
/// with respect to `[w, x, y, z]`.
pub fn body_z_with_jacobian(q: &Quat) -> (Vec3, Matrix3x4<f64>) {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let col = Vec3::new(
        2.0 * (w * y + x * z),
        2.0 * (y * z - w * x),
        1.0 - 2.0 * x * x - 2.0 * y * y,
    );
    let jac = Matrix3x4::new(
        2.0 * y,
        2.0 * z,
        2.0 * w,
        2.0 * x,
        -2.0 * x,
        -2.0 * w,
        2.0 * z,
        2.0 * y,
        0.0,
        -4.0 * x,
        -4.0 * y,
        0.0,
    );
    (col, jac)
}

/// The 4×4 matrix `Ω(ω)` with `q ⊗ [0, ω] = Ω(ω)·q`.
pub fn omega_matrix(w: &Vec3) -> Matrix4<f64> {
    Matrix4::new(
        0.0, -w.x, -w.y, -w.z, //
        w.x, 0.0, w.z, -w.y, //
        w.y, -w.z, 0.0, w.x, //
        w.z, w.y, -w.x, 0.0,
    )
}

/// The 4×3 matrix `Ξ(q)` with `q ⊗ [0, ω] = Ξ(q)·ω`.
pub fn xi_matrix(q: &Quat) -> Matrix4x3<f64> {
    Matrix4x3::new(
        -q.x, -q.y, -q.z, //
        q.w, -q.z, q.y, //
        q.z, q.w, -q.x, //
        -q.y, q.x, q.w,
    )
}

/// `½ q ⊗ [0, ω]` without a norm check.
pub fn quat_derivative_unchecked(q: &Quat, w: &Vec3) -> Vector4<f64> {
    0.5 * omega_matrix(w) * q.to_vector()
}

pub fn quat_derivative(q: &Quat, w: &Vec3) -> Result<Vector4<f64>> {
    check_unit(q)?;
    Ok(quat_derivative_unchecked(q, w))
}

pub fn quat_normalize(q: &Quat) -> Result<Quat> {
    let n = q.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::InvalidInput(format!("cannot normalize quaternion of norm {n}")));
    }
    if n == 1.0 {
        return Ok(*q);
    }
    Ok(Quat::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

/// Returns `q_ref` or `-q_ref`, whichever lies in the same hemisphere as `q`.
/// A zero dot product keeps `+q_ref`.
pub fn quat_align_sign(q: &Quat, q_ref: &Quat) -> Quat {
    if q.dot(q_ref) >= 0.0 {
        *q_ref
    } else {
        q_ref.negated()
    }
}

/// Quaternion of a proper rotation matrix (Shepperd's method), `w ≥ 0`.
pub fn quat_from_rotation(r: &Matrix3<f64>) -> Quat {
    let tr = r.trace();
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        Quat::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        Quat::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let q = if q.w < 0.0 { q.negated() } else { q };
    let n = q.norm();
    Quat::new(q.w / n, q.x / n, q.y / n, q.z / n)
}
