//! Ground-truth force and torque disturbances injected into the plant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Period of the sinusoidal profile, s.
pub const SINUSOID_PERIOD: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceKind {
    None,
    /// `f = [1 + 0.5 sin ωt, −0.5 cos ωt, 0]`, `τ = [0.2 sin ωt, 0.2 cos ωt, 0]`, ω = 2π/15.
    Sinusoid,
    /// Constant force, zero torque (wind or a payload step).
    Constant { force: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceProfile {
    pub kind: DisturbanceKind,
    /// Switch-on time; both outputs are exactly zero before it.
    pub activation: f64,
    /// Multiplier on the force channel only, in `[0, 1]`.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceSample {
    pub force: Vec3,
    pub torque: Vec3,
}

pub fn sinusoid_disturbance(dt: f64) -> DisturbanceSample {
    if dt < 0.0 {
        return DisturbanceSample::default();
    }
    let (s, c) = (2.0 * PI * dt / SINUSOID_PERIOD).sin_cos();
    DisturbanceSample {
        force: Vec3::new(1.0 + 0.5 * s, -0.5 * c, 0.0),
        torque: Vec3::new(0.2 * s, 0.2 * c, 0.0),
    }
}

pub fn constant_disturbance(force: Vec3) -> DisturbanceSample {
    DisturbanceSample { force, torque: Vec3::zeros() }
}

impl DisturbanceProfile {
    pub fn new(kind: DisturbanceKind, activation: f64) -> Self {
        Self { kind, activation, scale: 1.0 }
    }

    pub fn none() -> Self {
        Self::new(DisturbanceKind::None, 0.0)
    }

    pub fn sample(&self, t: f64) -> DisturbanceSample {
        let dt = t - self.activation;
        if dt < 0.0 {
            return DisturbanceSample::default();
        }
        let mut s = match self.kind {
            DisturbanceKind::None => DisturbanceSample::default(),
            DisturbanceKind::Sinusoid => sinusoid_disturbance(dt),
            DisturbanceKind::Constant { force } => constant_disturbance(Vec3::from(force)),
        };
        s.force *= self.scale;
        s
    }

    /// Supremum of `‖ḟ_d‖` after activation, N/s.
    pub fn derivative_bound(&self) -> f64 {
        let base = match self.kind {
            DisturbanceKind::None | DisturbanceKind::Constant { .. } => 0.0,
            DisturbanceKind::Sinusoid => 0.5 * 2.0 * PI / SINUSOID_PERIOD,
        };
        self.scale * base
    }

    /// Upper bound on `‖f_d‖`, N.
    pub fn magnitude_bound(&self) -> f64 {
        let base = match self.kind {
            DisturbanceKind::None => 0.0,
            // ‖f‖² = 1.25 + sin ωt
            DisturbanceKind::Sinusoid => 1.5,
            DisturbanceKind::Constant { force } => Vec3::from(force).norm(),
        };
        self.scale * base
    }
}

/// Scales the force channel of `base` by `k ∈ [0, 1]`.
pub fn scale_profile(base: &DisturbanceProfile, k: f64) -> Result<DisturbanceProfile> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::InvalidInput(format!("scale {k} outside [0, 1]")));
    }
    Ok(DisturbanceProfile { scale: base.scale * k, ..*base })
}

pub fn derivative_bound(profile: &DisturbanceProfile) -> f64 {
    profile.derivative_bound()
}
