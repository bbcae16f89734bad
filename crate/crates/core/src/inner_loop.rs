//! INDI angular-rate controller.
//!
//! `τ_c = τ_f + J(ω̇_c − ω̇_f)` with `ω̇_c = K_ω(ω_c − ω) + ω̇_r`. The measured
//! angular acceleration is a first difference of the gyro passed through a
//! second-order low-pass; the previous torque command goes through an
//! identical filter so both increments carry the same delay.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndiGains {
    /// Diagonal of `K_ω`, 1/s.
    pub k_omega: [f64; 3],
    pub cutoff_hz: f64,
    /// Skip both filters (raw first difference and raw previous torque).
    pub bypass_filters: bool,
}

impl Default for IndiGains {
    fn default() -> Self {
        Self { k_omega: [400.0, 400.0, 300.0], cutoff_hz: 50.0, bypass_filters: false }
    }
}

impl IndiGains {
    pub fn validate(&self, h: f64) -> Result<()> {
        if self.k_omega.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::InvalidInput("K_omega must be positive".into()));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < 0.5 / h) {
            return Err(Error::InvalidInput(format!("cutoff {} Hz must lie below Nyquist", self.cutoff_hz)));
        }
        Ok(())
    }
}

/// Second-order Butterworth low-pass (bilinear transform), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass2 {
    b: [f64; 3],
    a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl LowPass2 {
    pub fn new(cutoff_hz: f64, h: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz * h;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / std::f64::consts::SQRT_2;
        let a0 = 1.0 + alpha;
        let b0 = (1.0 - cs) / 2.0 / a0;
        Self { b: [b0, 2.0 * b0, b0], a: [-2.0 * cs / a0, (1.0 - alpha) / a0], s1: 0.0, s2: 0.0 }
    }

    /// Sets the internal state to the steady state for a constant input `x`.
    pub fn reset(&mut self, x: f64) {
        self.s2 = (self.b[2] - self.a[1]) * x;
        self.s1 = (self.b[1] - self.a[0]) * x + self.s2;
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass3 {
    axes: [LowPass2; 3],
}

impl LowPass3 {
    pub fn new(cutoff_hz: f64, h: f64, initial: Vec3) -> Self {
        let mut axes = [LowPass2::new(cutoff_hz, h); 3];
        for (f, x) in axes.iter_mut().zip(initial.iter()) {
            f.reset(*x);
        }
        Self { axes }
    }

    pub fn step(&mut self, x: &Vec3) -> Vec3 {
        Vec3::new(self.axes[0].step(x.x), self.axes[1].step(x.y), self.axes[2].step(x.z))
    }
}

/// Filter and feedback memory of the INDI loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IndiState {
    pub w_f: Vec3,
    pub w_dot_f: Vec3,
    pub tau_f: Vec3,
    w_prev: Vec3,
    accel_filter: LowPass3,
    torque_filter: LowPass3,
}

#[derive(Debug, Clone)]
pub struct IndiController {
    pub gains: IndiGains,
    pub inertia: Matrix3<f64>,
    pub torque_limits: Vec3,
    pub h: f64,
    pub state: IndiState,
}

impl IndiController {
    /// Starts with filters settled at zero angular acceleration and torque `tau0`.
    pub fn new(gains: IndiGains, inertia: Matrix3<f64>, torque_limits: Vec3, h: f64, w0: Vec3, tau0: Vec3) -> Result<Self> {
        gains.validate(h)?;
        let state = IndiState {
            w_f: w0,
            w_dot_f: Vec3::zeros(),
            tau_f: tau0,
            w_prev: w0,
            accel_filter: LowPass3::new(gains.cutoff_hz, h, Vec3::zeros()),
            torque_filter: LowPass3::new(gains.cutoff_hz, h, tau0),
        };
        Ok(Self { gains, inertia, torque_limits, h, state })
    }

    /// Angular-acceleration command `K_ω(ω_c − ω_f) + ω̇_r`.
    pub fn accel_command(&self, w_cmd: &Vec3, w_dot_ref: &Vec3) -> Vec3 {
        Vec3::from(self.gains.k_omega).component_mul(&(w_cmd - self.state.w_f)) + w_dot_ref
    }

    /// One 1 kHz update: returns the saturated torque command.
    pub fn step(&mut self, w_meas: &Vec3, w_cmd: &Vec3, w_dot_ref: &Vec3) -> Vec3 {
        let diff = (w_meas - self.state.w_prev) / self.h;
        self.state.w_prev = *w_meas;
        self.state.w_f = *w_meas;
        self.state.w_dot_f = if self.gains.bypass_filters { diff } else { self.state.accel_filter.step(&diff) };

        let w_dot_cmd = self.accel_command(w_cmd, w_dot_ref);
        let raw = indi_torque(&self.state.tau_f, &self.inertia, &w_dot_cmd, &self.state.w_dot_f);
        let tau = raw.zip_map(&self.torque_limits, |t, l| t.clamp(-l, l));

        self.state.tau_f = if self.gains.bypass_filters { tau } else { self.state.torque_filter.step(&tau) };
        tau
    }
}

/// `τ_f + J(ω̇_c − ω̇_f)`
pub fn indi_torque(tau_f: &Vec3, inertia: &Matrix3<f64>, w_dot_cmd: &Vec3, w_dot_f: &Vec3) -> Vec3 {
    tau_f + inertia * (w_dot_cmd - w_dot_f)
}
