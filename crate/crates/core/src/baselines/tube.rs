use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{state_vector, OuterCommand};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mpc::{input_rates, state_position, state_quat, state_velocity, InputVec, MpcConfig, MpcWeights, NmpcController, StateVec};
use crate::plant::{QuadState, GRAVITY};
use crate::reference::ReferencePoint;

use super::riccati::dare_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TubeConfig {
    /// Weight tying the free nominal initial state to the measurement.
    pub initial_penalty: f64,
}

impl Default for TubeConfig {
    fn default() -> Self {
        Self { initial_penalty: 1e4 }
    }
}

fn expm_nilpotent(m: &DMatrix<f64>) -> DMatrix<f64> {
    // Series; exact once the power vanishes.
    let n = m.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=n {
        term = &term * m / k as f64;
        if term.amax() == 0.0 {
            break;
        }
        out += &term;
    }
    out
}

/// Zero-order-hold discretization of the 9-state small-angle hover model
/// `[δp, δv, θ]` with inputs `[δT, ω]`.
pub fn hover_error_model(mass: f64, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut ac = DMatrix::zeros(9, 9);
    let mut bc = DMatrix::zeros(9, 4);
    for i in 0..3 {
        ac[(i, 3 + i)] = 1.0;
        bc[(6 + i, 1 + i)] = 1.0;
    }
    // −g·(θ × e_z) = −g·[θ_y, −θ_x, 0]
    ac[(3, 7)] = -GRAVITY;
    ac[(4, 6)] = GRAVITY;
    bc[(5, 0)] = -1.0 / mass;
    let mut aug = DMatrix::zeros(13, 13);
    aug.view_mut((0, 0), (9, 9)).copy_from(&(&ac * dt));
    aug.view_mut((0, 9), (9, 4)).copy_from(&(&bc * dt));
    let e = expm_nilpotent(&aug);
    (e.view((0, 0), (9, 9)).into_owned(), e.view((0, 9), (9, 4)).into_owned())
}

/// `[p − p*, v − v*, θ]` with `q = q* ⊗ exp(θ/2)`.
pub fn tube_error(x: &StateVec, x_star: &StateVec) -> DVector<f64> {
    let dp = state_position(x) - state_position(x_star);
    let dv = state_velocity(x) - state_velocity(x_star);
    let th = state_quat(x_star).conjugate().product(&state_quat(x)).small_angle();
    DVector::from_iterator(9, dp.iter().chain(dv.iter()).chain(th.iter()).copied())
}

/// Nominal MPC (free initial state, no disturbance estimate) plus ancillary
/// Riccati feedback on the deviation from the nominal initial state.
#[derive(Debug, Clone)]
pub struct TubeMpc {
    pub nominal: NmpcController,
    /// `u = u*_0 − K·e`
    pub gain: DMatrix<f64>,
    pub config: TubeConfig,
}

impl TubeMpc {
    pub fn new(mpc: MpcConfig, weights: MpcWeights, mass: f64, control_period: f64, config: TubeConfig) -> Result<Self> {
        if !(config.initial_penalty > 0.0) {
            return Err(Error::InvalidInput("initial-state penalty must be positive".into()));
        }
        let nominal = NmpcController::new(mpc, weights, mass, control_period)?.with_free_initial_state(config.initial_penalty);
        let (a, b) = hover_error_model(mass, mpc.dt);
        // Vector-part quaternion error is θ/2, so its weight maps to w/4 on θ.
        let qd: Vec<f64> = weights.q_p.iter().chain(&weights.q_v).copied().chain(weights.q_q[1..].iter().map(|w| w / 4.0)).collect();
        let q = DMatrix::from_diagonal(&DVector::from_vec(qd));
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&weights.r));
        let (_, gain) = dare_solve(&a, &b, &q, &r)?;
        Ok(Self { nominal, gain, config })
    }

    pub fn step(&mut self, x_meas: &QuadState, refs: &[ReferencePoint]) -> Result<OuterCommand> {
        let x = state_vector(x_meas);
        let out = self.nominal.rti_step(&x, &Vec3::zeros(), refs)?;
        let err = tube_error(&x, &out.solution.states[0]);
        let fb = -(&self.gain * err);
        let u = self.nominal.config.clamp_input(&(out.u0 + InputVec::from_iterator(fb.iter().copied())));
        Ok(OuterCommand {
            thrust: u[0],
            rates: input_rates(&u),
            rate_dot: Vec3::zeros(),
            status: out.solution.status,
            kkt: out.solution.kkt_residual,
        })
    }
}
