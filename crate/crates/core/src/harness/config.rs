//! Experiment configuration read from TOML, with dotted-key overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{ControllerId, PidGains, TubeConfig};
use crate::disturbance::{DisturbanceKind, DisturbanceProfile};
use crate::error::{Error, Result};
use crate::inner_loop::IndiGains;
use crate::math::Vec3;
use crate::mpc::{MpcConfig, MpcWeights};
use crate::observer::{FxtdoGains, HgdoGains};
use crate::plant::QuadParams;
use crate::reference::{EightTrajectoryParams, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Eight,
    Hover,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eight" => Ok(Scenario::Eight),
            "hover" => Ok(Scenario::Hover),
            _ => Err(Error::Config(format!("unknown scenario '{s}' (expected eight | hover)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: Scenario,
    pub controller: ControllerId,
    /// Seconds; scenario default when absent (60 for eight, 40 for hover).
    pub duration: Option<f64>,
    pub plant_rate: f64,
    pub control_rate: f64,
    pub seed: u64,
    /// Start of the RMSE window, s.
    pub rmse_start: f64,
    pub hover_position: [f64; 3],
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            scenario: Scenario::Eight,
            controller: ControllerId::FxtdoMpc,
            duration: None,
            plant_rate: 1000.0,
            control_rate: 100.0,
            seed: 0,
            rmse_start: 5.0,
            hover_position: [0.0, 0.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceChoice {
    /// Sinusoid for the eight scenario, constant wind for hover.
    Auto,
    None,
    Sinusoid,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSection {
    pub kind: DisturbanceChoice,
    /// Force of the constant profile, N.
    pub force: [f64; 3],
    pub scale: f64,
    /// Switch-on time, s; scenario default when absent (10 for eight, 20 for hover).
    pub activation: Option<f64>,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self { kind: DisturbanceChoice::Auto, force: [1.0, -0.5, 0.0], scale: 1.0, activation: None }
    }
}

/// MPC settings; thrust bounds default to `[0.2 mg, T/W · mg]` of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub dt: f64,
    pub thrust_min: Option<f64>,
    pub thrust_max: Option<f64>,
    pub rate_max: f64,
    pub iterations: usize,
    pub kkt_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MpcSection {
    fn default() -> Self {
        let d = MpcConfig::default();
        Self {
            horizon: d.horizon,
            dt: d.dt,
            thrust_min: None,
            thrust_max: None,
            rate_max: d.rate_max,
            iterations: d.iterations,
            kkt_tol: d.kkt_tol,
            qp_max_iter: d.qp_max_iter,
        }
    }
}

impl MpcSection {
    pub fn resolve(&self, vehicle: &QuadParams) -> MpcConfig {
        let base = MpcConfig::for_params(vehicle);
        MpcConfig {
            horizon: self.horizon,
            dt: self.dt,
            thrust_min: self.thrust_min.unwrap_or(base.thrust_min),
            thrust_max: self.thrust_max.unwrap_or(base.thrust_max),
            rate_max: self.rate_max,
            iterations: self.iterations,
            kkt_tol: self.kkt_tol,
            qp_max_iter: self.qp_max_iter,
        }
    }
}

/// Standard deviations of additive Gaussian measurement noise; all zero by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub position: f64,
    pub velocity: f64,
    /// Small-angle attitude noise, rad.
    pub attitude: f64,
    pub rate: f64,
}

impl NoiseSection {
    pub fn is_zero(&self) -> bool {
        self.position == 0.0 && self.velocity == 0.0 && self.attitude == 0.0 && self.rate == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub disturbance: DisturbanceSection,
    pub vehicle: QuadParams,
    pub trajectory: EightTrajectoryParams,
    pub mpc: MpcSection,
    pub weights: MpcWeights,
    pub fxtdo: FxtdoGains,
    pub hgdo: HgdoGains,
    pub indi: IndiGains,
    pub pid: PidGains,
    pub tube: TubeConfig,
    pub noise: NoiseSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_file_with_overrides(path, &[])
    }

    pub fn from_file_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses `text` and applies `section.key=value` overrides before validation.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: ExperimentConfig = if overrides.is_empty() {
            // Deserializing the text directly keeps line numbers in errors.
            toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        } else {
            let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if let Some(d) = e.duration {
            if !(d > 0.0) {
                return Err(Error::Config(format!("duration {d} must be positive")));
            }
        }
        if !(e.plant_rate > 0.0 && e.control_rate > 0.0) {
            return Err(Error::Config("rates must be positive".into()));
        }
        let ratio = e.plant_rate / e.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config(format!("control rate {} must divide plant rate {}", e.control_rate, e.plant_rate)));
        }
        if !(0.0..=1.0).contains(&self.disturbance.scale) {
            return Err(Error::Config(format!("disturbance scale {} outside [0, 1]", self.disturbance.scale)));
        }
        if let Some(a) = self.disturbance.activation {
            if !(a >= 0.0) {
                return Err(Error::Config(format!("activation {a} must be non-negative")));
            }
        }
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.vehicle.validate())?;
        wrap(self.mpc.resolve(&self.vehicle).validate())?;
        wrap(self.weights.validate())?;
        wrap(self.fxtdo.validate())?;
        wrap(self.hgdo.validate())?;
        wrap(self.indi.validate(1.0 / e.plant_rate))?;
        wrap(self.pid.validate())?;
        if self.experiment.rmse_start < 0.0 {
            return Err(Error::Config("rmse_start must be non-negative".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.experiment.duration.unwrap_or(match self.experiment.scenario {
            Scenario::Eight => 60.0,
            Scenario::Hover => 40.0,
        })
    }

    pub fn activation(&self) -> f64 {
        self.disturbance.activation.unwrap_or(match self.experiment.scenario {
            Scenario::Eight => 10.0,
            Scenario::Hover => 20.0,
        })
    }

    pub fn plant_step(&self) -> f64 {
        1.0 / self.experiment.plant_rate
    }

    pub fn control_ratio(&self) -> usize {
        (self.experiment.plant_rate / self.experiment.control_rate).round() as usize
    }

    pub fn trajectory(&self) -> Trajectory {
        match self.experiment.scenario {
            Scenario::Eight => Trajectory::Eight(self.trajectory),
            Scenario::Hover => Trajectory::Hover(Vec3::from(self.experiment.hover_position)),
        }
    }

    pub fn disturbance_profile(&self) -> DisturbanceProfile {
        let kind = match (self.disturbance.kind, self.experiment.scenario) {
            (DisturbanceChoice::None, _) => DisturbanceKind::None,
            (DisturbanceChoice::Sinusoid, _) | (DisturbanceChoice::Auto, Scenario::Eight) => DisturbanceKind::Sinusoid,
            (DisturbanceChoice::Constant, _) | (DisturbanceChoice::Auto, Scenario::Hover) => {
                DisturbanceKind::Constant { force: self.disturbance.force }
            }
        };
        DisturbanceProfile { kind, activation: self.activation(), scale: self.disturbance.scale }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        self.mpc.resolve(&self.vehicle)
    }
}

/// Applies `a.b.c=value`; the value is parsed as a TOML literal, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
