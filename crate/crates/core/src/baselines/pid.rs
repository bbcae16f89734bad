use serde::{Deserialize, Serialize};

use super::OuterCommand;
use crate::error::{Error, Result};
use crate::math::{quat_from_rotation, rotation_unchecked, Vec3};
use crate::mpc::MpcConfig;
use crate::plant::{gravity, QuadState};
use crate::reference::{attitude_from_z_and_yaw, ReferencePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    /// Position proportional gain, s⁻².
    pub kp: [f64; 3],
    /// Position integral gain, s⁻³.
    pub ki: [f64; 3],
    /// Velocity gain, s⁻¹.
    pub kd: [f64; 3],
    /// Attitude proportional gain, s⁻¹.
    pub k_att: f64,
    /// Bound on each integral contribution, m/s².
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: [6.0, 6.0, 8.0], ki: [0.5, 0.5, 1.0], kd: [4.0, 4.0, 5.0], k_att: 8.0, integral_limit: 2.0 }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let all = self.kp.iter().chain(&self.ki).chain(&self.kd).chain(std::iter::once(&self.k_att));
        if all.clone().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidInput("PID gains must be non-negative".into()));
        }
        if !(self.integral_limit > 0.0) {
            return Err(Error::InvalidInput("integrator limit must be positive".into()));
        }
        Ok(())
    }
}

/// One cascade evaluation on position and velocity errors only; no
/// acceleration or rate feedforward. `integral` is the accumulated position
/// error, updated in place and clamped so that each `kᵢ·∫e` stays within the
/// limit.
pub fn pid_step(
    s: &QuadState,
    r: &ReferencePoint,
    gains: &PidGains,
    integral: &mut Vec3,
    mass: f64,
    limits: &MpcConfig,
    dt: f64,
) -> Result<OuterCommand> {
    let e_p = r.p - s.p;
    let e_v = r.v - s.v;
    for i in 0..3 {
        integral[i] += e_p[i] * dt;
        if gains.ki[i] > 0.0 {
            let lim = gains.integral_limit / gains.ki[i];
            integral[i] = integral[i].clamp(-lim, lim);
        }
    }
    let kp = Vec3::from(gains.kp);
    let ki = Vec3::from(gains.ki);
    let kd = Vec3::from(gains.kd);
    let mut a_des = kp.component_mul(&e_p) + kd.component_mul(&e_v) + ki.component_mul(integral);
    // Keep the thrust direction in the upper hemisphere.
    a_des.z = a_des.z.min(0.8 * gravity().z);

    let force = mass * (gravity() - a_des);
    let z_des = force.normalize();
    let (rot_des, _) = attitude_from_z_and_yaw(&z_des, r.q.yaw())?;
    let q_des = quat_from_rotation(&rot_des);
    let att_err = s.q.conjugate().product(&q_des).small_angle();

    let rates = (gains.k_att * att_err).map(|w| w.clamp(-limits.rate_max, limits.rate_max));
    let z_b = rotation_unchecked(&s.q).column(2).into_owned();
    let thrust = force.dot(&z_b).clamp(limits.thrust_min, limits.thrust_max);
    Ok(OuterCommand::new(thrust, rates))
}

#[derive(Debug, Clone)]
pub struct PidController {
    pub gains: PidGains,
    pub mass: f64,
    pub limits: MpcConfig,
    pub dt: f64,
    pub integral: Vec3,
}

impl PidController {
    pub fn new(gains: PidGains, mass: f64, limits: MpcConfig, dt: f64) -> Result<Self> {
        gains.validate()?;
        Ok(Self { gains, mass, limits, dt, integral: Vec3::zeros() })
    }

    pub fn step(&mut self, s: &QuadState, r: &ReferencePoint) -> Result<OuterCommand> {
        pid_step(s, r, &self.gains, &mut self.integral, self.mass, &self.limits, self.dt)
    }
}
