//! Comparison controllers: cascaded PID, tube MPC with Riccati feedback, and
//! the MPC variants that differ only in their disturbance estimate.

mod pid;
mod riccati;
mod tube;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use pid::{pid_step, PidController, PidGains};
pub use riccati::{dare_solve, riccati_residual, spectral_radius};
pub use tube::{hover_error_model, tube_error, TubeConfig, TubeMpc};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mpc::{input_rates, pack_state, NmpcController, OcpSolution, SolveStatus, StateVec};
use crate::observer::ObserverKind;
use crate::plant::QuadState;
use crate::reference::ReferencePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerId {
    #[serde(rename = "pid")]
    Pid,
    #[serde(rename = "mpc")]
    Mpc,
    #[serde(rename = "rtmpc")]
    Rtmpc,
    #[serde(rename = "hgdo-mpc")]
    HgdoMpc,
    #[serde(rename = "fxtdo-mpc")]
    FxtdoMpc,
}

impl ControllerId {
    /// Display order of comparison tables.
    pub const ALL: [ControllerId; 5] =
        [ControllerId::Pid, ControllerId::Mpc, ControllerId::Rtmpc, ControllerId::HgdoMpc, ControllerId::FxtdoMpc];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerId::Pid => "pid",
            ControllerId::Mpc => "mpc",
            ControllerId::Rtmpc => "rtmpc",
            ControllerId::HgdoMpc => "hgdo-mpc",
            ControllerId::FxtdoMpc => "fxtdo-mpc",
        }
    }

    /// Observer whose estimate feeds the controller, if any.
    pub fn observer(&self) -> Option<ObserverKind> {
        match self {
            ControllerId::HgdoMpc => Some(ObserverKind::Hgdo),
            ControllerId::FxtdoMpc => Some(ObserverKind::Fxtdo),
            _ => None,
        }
    }
}

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerId::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}' (expected pid | mpc | rtmpc | hgdo-mpc | fxtdo-mpc)")))
    }
}

/// Collective thrust and body-rate command handed to the rate loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterCommand {
    pub thrust: f64,
    pub rates: Vec3,
    pub rate_dot: Vec3,
    pub status: SolveStatus,
    /// NaN for controllers without an optimizer.
    pub kkt: f64,
}

impl OuterCommand {
    pub fn new(thrust: f64, rates: Vec3) -> Self {
        Self { thrust, rates, rate_dot: Vec3::zeros(), status: SolveStatus::Converged, kkt: f64::NAN }
    }
}

pub fn state_vector(s: &QuadState) -> StateVec {
    pack_state(&s.p, &s.v, &s.q)
}

fn from_solution(u0: &crate::mpc::InputVec, sol: &OcpSolution) -> OuterCommand {
    OuterCommand { thrust: u0[0], rates: input_rates(u0), rate_dot: Vec3::zeros(), status: sol.status, kkt: sol.kkt_residual }
}

/// Nonlinear MPC fed with a disturbance estimate (or none).
pub fn mpc_step(ctrl: &mut NmpcController, x_meas: &QuadState, f_hat: &Vec3, refs: &[ReferencePoint]) -> Result<OuterCommand> {
    let out = ctrl.rti_step(&state_vector(x_meas), f_hat, refs)?;
    Ok(from_solution(&out.u0, &out.solution))
}

/// Plain MPC: the prediction model carries no disturbance term.
pub fn plain_mpc_step(ctrl: &mut NmpcController, x_meas: &QuadState, refs: &[ReferencePoint]) -> Result<OuterCommand> {
    mpc_step(ctrl, x_meas, &Vec3::zeros(), refs)
}

/// MPC with the high-gain observer's estimate.
pub fn hgdo_mpc_step(ctrl: &mut NmpcController, x_meas: &QuadState, f_hat: &Vec3, refs: &[ReferencePoint]) -> Result<OuterCommand> {
    mpc_step(ctrl, x_meas, f_hat, refs)
}

/// Any outer-loop controller.
#[derive(Debug, Clone)]
pub enum OuterController {
    Pid(PidController),
    Mpc { ctrl: NmpcController, use_estimate: bool },
    Tube(TubeMpc),
}

impl OuterController {
    /// `refs` are the horizon samples starting at the current time.
    pub fn step(&mut self, x_meas: &QuadState, f_hat: &Vec3, refs: &[ReferencePoint]) -> Result<OuterCommand> {
        match self {
            OuterController::Pid(pid) => pid.step(x_meas, &refs[0]),
            OuterController::Mpc { ctrl, use_estimate: true } => mpc_step(ctrl, x_meas, f_hat, refs),
            OuterController::Mpc { ctrl, use_estimate: false } => plain_mpc_step(ctrl, x_meas, refs),
            OuterController::Tube(t) => t.step(x_meas, refs),
        }
    }
}
