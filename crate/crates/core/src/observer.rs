//! Disturbance observers on the translational momentum `z₁ = m·v`, whose
//! dynamics are `ż₁ = T + f_d` with virtual input `T = m·g − R(q)·T_c·e_z`.
//!
//! The fixed-time observer corrects with the bi-homogeneous functions
//!
//! ```text
//! φ₁(e) = k₁⌈e⌋^½ + k₁'⌈e⌋ + k₁''⌈e⌋^(1/(1−d∞))
//! φ₂(e) = k₂⌈e⌋⁰  + k₂'⌈e⌋ + k₂''⌈e⌋^((1+d∞)/(1−d∞))
//! ```
//!
//! and the high-gain observer with linear gains `α₁/ε`, `α₂/ε²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{rotation_unchecked, signed_power, Quat, Vec3};
use crate::plant::gravity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FxtdoGains {
    pub k1: f64,
    pub k2: f64,
    pub k1_lin: f64,
    pub k2_lin: f64,
    pub k1_high: f64,
    pub k2_high: f64,
    pub d_inf: f64,
    pub l1: f64,
    pub l2: f64,
    /// Half-width of a linear interval replacing the signum near zero; 0 keeps it exact.
    pub boundary_layer: f64,
}

impl Default for FxtdoGains {
    fn default() -> Self {
        Self {
            k1: 2.0,
            k2: 2.0,
            k1_lin: 0.6,
            k2_lin: 0.6,
            k1_high: 3.0,
            k2_high: 3.0,
            d_inf: 1.0 / 3.0,
            l1: 1.0,
            l2: 1.0,
            boundary_layer: 0.0,
        }
    }
}

impl FxtdoGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.k1, self.k2, self.k1_lin, self.k2_lin, self.k1_high, self.k2_high, self.l1, self.l2];
        if positive.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidInput("observer gains must be positive".into()));
        }
        if !(self.d_inf > 0.0 && self.d_inf < 1.0) {
            return Err(Error::InvalidInput(format!("d_inf = {} outside (0, 1)", self.d_inf)));
        }
        if !(self.boundary_layer >= 0.0) {
            return Err(Error::InvalidInput("boundary layer must be non-negative".into()));
        }
        Ok(())
    }

    fn signum(&self, e: &Vec3) -> Vec3 {
        if self.boundary_layer > 0.0 {
            e / e.norm().max(self.boundary_layer)
        } else {
            signed_power(e, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HgdoGains {
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
}

impl Default for HgdoGains {
    fn default() -> Self {
        Self { alpha1: 3.0, alpha2: 2.0, epsilon: 0.2 }
    }
}

impl HgdoGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidInput("HGDO gains must be positive".into()));
        }
        Ok(())
    }
}

/// Momentum estimate `ẑ₁` (kg·m/s) and disturbance estimate `f̂_d` (N).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObserverState {
    pub z_hat: Vec3,
    pub f_hat: Vec3,
}

impl ObserverState {
    pub fn new(z_hat: Vec3, f_hat: Vec3) -> Self {
        Self { z_hat, f_hat }
    }
}

/// `T = m·g − R(q)·T_c·e_z`.
pub fn virtual_input(q: &Quat, thrust: f64, m: f64) -> Vec3 {
    m * gravity() - rotation_unchecked(q).column(2) * thrust
}

pub fn phi1(e: &Vec3, g: &FxtdoGains) -> Vec3 {
    g.k1 * signed_power(e, 0.5) + g.k1_lin * e + g.k1_high * signed_power(e, 1.0 / (1.0 - g.d_inf))
}

pub fn phi2(e: &Vec3, g: &FxtdoGains) -> Vec3 {
    g.k2 * g.signum(e) + g.k2_lin * e + g.k2_high * signed_power(e, (1.0 + g.d_inf) / (1.0 - g.d_inf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    #[default]
    Euler,
    /// Classical RK4 with the measurement and input held over the step.
    Rk4,
}

fn integrate<F>(st: &ObserverState, h: f64, scheme: Discretization, f: F) -> ObserverState
where
    F: Fn(&ObserverState) -> (Vec3, Vec3),
{
    let shift = |s: &ObserverState, d: &(Vec3, Vec3), a: f64| ObserverState::new(s.z_hat + a * d.0, s.f_hat + a * d.1);
    match scheme {
        Discretization::Euler => shift(st, &f(st), h),
        Discretization::Rk4 => {
            let k1 = f(st);
            let k2 = f(&shift(st, &k1, 0.5 * h));
            let k3 = f(&shift(st, &k2, 0.5 * h));
            let k4 = f(&shift(st, &k3, h));
            let sum = (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0, k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            shift(st, &sum, h / 6.0)
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 0.01) {
        return Err(Error::InvalidInput(format!("observer step {h} outside (0, 0.01]")));
    }
    Ok(())
}

pub fn fxtdo_step_with(
    st: &ObserverState,
    z1_meas: &Vec3,
    input: &Vec3,
    gains: &FxtdoGains,
    h: f64,
    scheme: Discretization,
) -> Result<ObserverState> {
    check_step(h)?;
    Ok(integrate(st, h, scheme, |s| {
        let e1 = z1_meas - s.z_hat;
        (s.f_hat + input + gains.l1 * phi1(&e1, gains), gains.l2 * phi2(&e1, gains))
    }))
}

/// One explicit-Euler step of the fixed-time observer.
pub fn fxtdo_step(st: &ObserverState, z1_meas: &Vec3, input: &Vec3, gains: &FxtdoGains, h: f64) -> Result<ObserverState> {
    fxtdo_step_with(st, z1_meas, input, gains, h, Discretization::Euler)
}

pub fn hgdo_step_with(
    st: &ObserverState,
    z1_meas: &Vec3,
    input: &Vec3,
    gains: &HgdoGains,
    h: f64,
    scheme: Discretization,
) -> Result<ObserverState> {
    check_step(h)?;
    let (a1, a2) = (gains.alpha1 / gains.epsilon, gains.alpha2 / (gains.epsilon * gains.epsilon));
    Ok(integrate(st, h, scheme, |s| {
        let e1 = z1_meas - s.z_hat;
        (s.f_hat + input + a1 * e1, a2 * e1)
    }))
}

pub fn hgdo_step(st: &ObserverState, z1_meas: &Vec3, input: &Vec3, gains: &HgdoGains, h: f64) -> Result<ObserverState> {
    hgdo_step_with(st, z1_meas, input, gains, h, Discretization::Euler)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub l2_k2: f64,
    pub derivative_bound: f64,
    pub l2_pass: bool,
    /// `L₂·k₂ − δ̄`
    pub margin: f64,
    /// The `L₁` condition needs a sup over a homogeneous sphere and is not evaluated.
    pub l1_note: &'static str,
}

/// Checks `L₂ > δ̄/k₂`.
pub fn check_gain_conditions(gains: &FxtdoGains, derivative_bound: f64) -> Result<GainReport> {
    if !(derivative_bound >= 0.0) {
        return Err(Error::InvalidInput("derivative bound must be non-negative".into()));
    }
    let l2_k2 = gains.l2 * gains.k2;
    Ok(GainReport {
        l2_k2,
        derivative_bound,
        l2_pass: l2_k2 > derivative_bound,
        margin: l2_k2 - derivative_bound,
        l1_note: "L1 condition not verified (taken as configured)",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    Fxtdo,
    Hgdo,
}

/// A running observer instance.
#[derive(Debug, Clone)]
pub enum DisturbanceObserver {
    Fxtdo { gains: FxtdoGains, state: ObserverState },
    Hgdo { gains: HgdoGains, state: ObserverState },
}

impl DisturbanceObserver {
    pub fn fxtdo(gains: FxtdoGains, z1: Vec3) -> Result<Self> {
        gains.validate()?;
        Ok(Self::Fxtdo { gains, state: ObserverState::new(z1, Vec3::zeros()) })
    }

    pub fn hgdo(gains: HgdoGains, z1: Vec3) -> Result<Self> {
        gains.validate()?;
        Ok(Self::Hgdo { gains, state: ObserverState::new(z1, Vec3::zeros()) })
    }

    pub fn state(&self) -> &ObserverState {
        match self {
            Self::Fxtdo { state, .. } | Self::Hgdo { state, .. } => state,
        }
    }

    pub fn estimate(&self) -> Vec3 {
        self.state().f_hat
    }

    pub fn step(&mut self, z1_meas: &Vec3, input: &Vec3, h: f64) -> Result<()> {
        match self {
            Self::Fxtdo { gains, state } => *state = fxtdo_step(state, z1_meas, input, gains, h)?,
            Self::Hgdo { gains, state } => *state = hgdo_step(state, z1_meas, input, gains, h)?,
        }
        Ok(())
    }
}
