//! Desired trajectories and the flatness map from position/yaw to full
//! reference states and inputs.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quat_align_sign, quat_from_rotation, Quat, Vec3};
use crate::plant::gravity;

/// Position and yaw with their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub j: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Reference state `(p, v, q)`, reference input `(T, ω)` and angular acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
    pub thrust: f64,
    pub w: Vec3,
    pub w_dot: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EightTrajectoryParams {
    pub r_x: f64,
    pub r_y: f64,
    pub r_z: f64,
    pub k_t: f64,
}

impl Default for EightTrajectoryParams {
    fn default() -> Self {
        Self { r_x: 3.0, r_y: 5.0, r_z: -1.0, k_t: 0.01 }
    }
}

/// Figure-eight `[r_x sin φ cos φ, r_y cos φ − r_y, r_z]` with `φ = k_t t²`
/// and zero yaw.
pub fn eight_trajectory(t: f64, prm: &EightTrajectoryParams) -> FlatOutput {
    let phi = prm.k_t * t * t;
    let d1 = 2.0 * prm.k_t * t;
    let d2 = 2.0 * prm.k_t;
    let (s2, c2) = (2.0 * phi).sin_cos();
    let (s1, c1) = phi.sin_cos();

    // Derivatives of each coordinate with respect to φ; φ''' = 0.
    let x = [0.5 * prm.r_x * s2, prm.r_x * c2, -2.0 * prm.r_x * s2, -4.0 * prm.r_x * c2];
    let y = [prm.r_y * (c1 - 1.0), -prm.r_y * s1, -prm.r_y * c1, prm.r_y * s1];
    let chain = |f: &[f64; 4]| {
        (f[0], f[1] * d1, f[2] * d1 * d1 + f[1] * d2, f[3] * d1 * d1 * d1 + 3.0 * f[2] * d1 * d2)
    };
    let (px, vx, ax, jx) = chain(&x);
    let (py, vy, ay, jy) = chain(&y);
    FlatOutput {
        p: Vec3::new(px, py, prm.r_z),
        v: Vec3::new(vx, vy, 0.0),
        a: Vec3::new(ax, ay, 0.0),
        j: Vec3::new(jx, jy, 0.0),
        yaw: 0.0,
        yaw_rate: 0.0,
    }
}

pub fn hover_reference(p: Vec3) -> FlatOutput {
    FlatOutput { p, v: Vec3::zeros(), a: Vec3::zeros(), j: Vec3::zeros(), yaw: 0.0, yaw_rate: 0.0 }
}

/// Attitude whose body z axis (world frame) is `z_b` and whose x axis has
/// zero heading component orthogonal to `yaw`.
pub(crate) fn attitude_from_z_and_yaw(z_b: &Vec3, yaw: f64) -> Result<(Matrix3<f64>, f64)> {
    let y_c = Vec3::new(-yaw.sin(), yaw.cos(), 0.0);
    let c = y_c.cross(z_b);
    let c_norm = c.norm();
    if c_norm < 1e-6 {
        return Err(Error::DegenerateReference("body z axis aligned with heading axis".into()));
    }
    let x_b = c / c_norm;
    let y_b = z_b.cross(&x_b);
    Ok((Matrix3::from_columns(&[x_b, y_b, *z_b]), c_norm))
}

/// Full reference from flat outputs for a vehicle of mass `m`, ignoring
/// disturbances. Thrust acts along body −z, so `T·R·e_z = m(g − a)`.
pub fn flat_to_reference(f: &FlatOutput, m: f64) -> Result<ReferencePoint> {
    let force = m * (gravity() - f.a);
    let thrust = force.norm();
    if thrust < 1e-6 {
        return Err(Error::DegenerateReference("free-fall reference has no thrust direction".into()));
    }
    let z_b = force / thrust;
    let (rot, c_norm) = attitude_from_z_and_yaw(&z_b, f.yaw)?;
    let x_b = rot.column(0).into_owned();
    let y_b = rot.column(1).into_owned();

    // d(T z_B)/dt = −m j, so ż_B = −(m/T)(j − (j·z_B) z_B) = ω_y x_B − ω_x y_B.
    let h = -(m / thrust) * (f.j - f.j.dot(&z_b) * z_b);
    let wx = -h.dot(&y_b);
    let wy = h.dot(&x_b);
    // ω_z = ẋ_B·y_B with x_B = (y_C × z_B)/‖y_C × z_B‖.
    let y_c_dot = -f.yaw_rate * Vec3::new(f.yaw.cos(), f.yaw.sin(), 0.0);
    let y_c = Vec3::new(-f.yaw.sin(), f.yaw.cos(), 0.0);
    let c_dot = y_c_dot.cross(&z_b) + y_c.cross(&h);
    let wz = c_dot.dot(&y_b) / c_norm;

    Ok(ReferencePoint {
        p: f.p,
        v: f.v,
        q: quat_from_rotation(&rot),
        thrust,
        w: Vec3::new(wx, wy, wz),
        w_dot: Vec3::zeros(),
    })
}

/// A reference source: the figure eight or a fixed hover point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    Eight(EightTrajectoryParams),
    Hover(Vec3),
}

impl Trajectory {
    pub fn flat(&self, t: f64) -> FlatOutput {
        match self {
            Trajectory::Eight(prm) => eight_trajectory(t, prm),
            Trajectory::Hover(p) => hover_reference(*p),
        }
    }
}

/// References at `t0, t0 + dt, …, t0 + N·dt`, with each quaternion sign-aligned
/// to its predecessor.
pub fn sample_horizon(traj: &Trajectory, t0: f64, n: usize, dt: f64, m: f64) -> Result<Vec<ReferencePoint>> {
    if n == 0 {
        return Err(Error::InvalidInput("horizon must have at least one interval".into()));
    }
    let mut out: Vec<ReferencePoint> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut r = flat_to_reference(&traj.flat(t0 + k as f64 * dt), m)?;
        if let Some(prev) = out.last() {
            r.q = quat_align_sign(&prev.q, &r.q);
        }
        out.push(r);
    }
    Ok(out)
}
