//! Nonlinear MPC solved by Gauss-Newton real-time iterations on a
//! multiple-shooting transcription.

pub mod model;
pub mod ocp;
pub mod qp;

use serde::{Deserialize, Serialize};

pub use model::{
    input_rates, integrate, pack_input, pack_state, prediction_derivative, prediction_jacobians, shoot, state_position,
    state_quat, state_velocity, InputMat, InputVec, Shot, StateMat, StateVec, NU, NX,
};
pub use ocp::{build_qp, reference_input, reference_state, CondensedQp, InitialCondition, MpcConfig, MpcWeights, ShootingQp, Trajectory};
pub use qp::{kkt_residual, qp_solve, BoundState, DenseQp, KktResidual, QpOptions, QpSolution, QpStatus};

use crate::error::{Error, Result};
use crate::math::{quat_align_sign, quat_normalize, Quat, Vec3};
use crate::reference::ReferencePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// QP failed; the previous plan was reused.
    Degraded,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Degraded => "degraded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub states: Vec<StateVec>,
    pub inputs: Vec<InputVec>,
    /// Bound multipliers of the last QP, `[λ_lower, λ_upper]` per decision variable.
    pub multipliers: Vec<[f64; 2]>,
    /// `|∇ᵀδz| + Σ‖gaps‖₁` at the last linearization point.
    pub kkt_residual: f64,
    /// Gauss-Newton model objective at the updated trajectory.
    pub objective: f64,
    /// Model objective of the warm start (zero step).
    pub warm_objective: f64,
    pub qp_kkt: f64,
    pub status: SolveStatus,
}

impl OcpSolution {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory { states: self.states.clone(), inputs: self.inputs.clone() }
    }

    /// State at node `k` with its quaternion normalized.
    pub fn state(&self, k: usize) -> StateVec {
        let mut x = self.states[k];
        let q = state_quat(&x);
        if let Ok(q) = quat_normalize(&q) {
            x.fixed_rows_mut::<4>(6).copy_from(&q.to_vector());
        }
        x
    }
}

/// Shifts by one node and re-integrates the new terminal state with the
/// duplicated last input.
pub fn shift_warm_start(sol: &OcpSolution, f_hat: &Vec3, mass: f64, dt: f64) -> OcpSolution {
    let n = sol.inputs.len();
    let mut inputs: Vec<InputVec> = sol.inputs[1..].to_vec();
    inputs.push(sol.inputs[n - 1]);
    let mut states: Vec<StateVec> = sol.states[1..].to_vec();
    states.push(integrate(&sol.states[n], &inputs[n - 1], f_hat, mass, dt));
    OcpSolution { states, inputs, ..sol.clone() }
}

/// Advances every node by `delta < dt` along the model with its own input.
fn advance_warm_start(traj: &Trajectory, f_hat: &Vec3, mass: f64, delta: f64) -> Trajectory {
    let n = traj.inputs.len();
    let states = (0..=n).map(|k| integrate(&traj.states[k], &traj.inputs[k.min(n - 1)], f_hat, mass, delta)).collect();
    Trajectory { states, inputs: traj.inputs.clone() }
}

#[derive(Debug, Clone)]
pub struct RtiOutput {
    pub u0: InputVec,
    pub solution: OcpSolution,
}

#[derive(Debug, Clone)]
pub struct NmpcController {
    pub config: MpcConfig,
    pub weights: MpcWeights,
    pub mass: f64,
    pub initial: InitialCondition,
    /// Time between consecutive calls, used to advance the warm start.
    pub control_period: f64,
    last: Option<(Trajectory, Vec<BoundState>)>,
    last_u0: Option<InputVec>,
}

impl NmpcController {
    pub fn new(config: MpcConfig, weights: MpcWeights, mass: f64, control_period: f64) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        if !(control_period > 0.0 && control_period <= config.dt) {
            return Err(Error::InvalidInput(format!("control period {control_period} must lie in (0, dt]")));
        }
        Ok(Self { config, weights, mass, initial: InitialCondition::Fixed, control_period, last: None, last_u0: None })
    }

    pub fn with_free_initial_state(mut self, penalty: f64) -> Self {
        self.initial = InitialCondition::Free { penalty };
        self
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.last_u0 = None;
    }

    fn warm_start(&self, refs: &[ReferencePoint], f_hat: &Vec3) -> (Trajectory, Option<Vec<BoundState>>) {
        match &self.last {
            Some((traj, basis)) => {
                let adv = if (self.control_period - self.config.dt).abs() < 1e-12 {
                    let sol = OcpSolution {
                        states: traj.states.clone(),
                        inputs: traj.inputs.clone(),
                        multipliers: Vec::new(),
                        kkt_residual: 0.0,
                        objective: 0.0,
                        warm_objective: 0.0,
                        qp_kkt: 0.0,
                        status: SolveStatus::Converged,
                    };
                    shift_warm_start(&sol, f_hat, self.mass, self.config.dt).trajectory()
                } else {
                    advance_warm_start(traj, f_hat, self.mass, self.control_period)
                };
                (adv, Some(basis.clone()))
            }
            None => {
                let mut states: Vec<StateVec> = Vec::with_capacity(refs.len());
                for r in refs {
                    let mut q = r.q;
                    if let Some(prev) = states.last() {
                        q = quat_align_sign(&state_quat(prev), &q);
                    }
                    states.push(pack_state(&r.p, &r.v, &q));
                }
                let inputs = refs[..refs.len() - 1].iter().map(|r| self.config.clamp_input(&reference_input(r))).collect();
                (Trajectory { states, inputs }, None)
            }
        }
    }

    /// One control step: `config.iterations` Gauss-Newton iterations from the
    /// advanced previous solution. On QP failure the previous plan's first
    /// input is returned with a degraded status.
    pub fn rti_step(&mut self, x_meas: &StateVec, f_hat: &Vec3, refs: &[ReferencePoint]) -> Result<RtiOutput> {
        let n = self.config.horizon;
        if refs.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!("{} references for horizon {}", refs.len(), n)));
        }
        let (mut lin, mut basis) = self.warm_start(refs, f_hat);
        let mut x0 = *x_meas;
        let q0 = quat_align_sign(&state_quat(&lin.states[0]), &state_quat(x_meas));
        x0.fixed_rows_mut::<4>(6).copy_from(&q0.to_vector());

        let opts = QpOptions { max_iter: self.config.qp_max_iter, tol: 1e-10 };
        let mut solution = None;
        for _ in 0..self.config.iterations {
            let sqp = build_qp(&x0, refs, f_hat, self.mass, &self.weights, &self.config, &lin, self.initial)?;
            let cond = sqp.condense();
            let res = qp_solve(&cond.qp, basis.as_deref(), &opts);
            let qs = match res {
                Ok(s) if s.z.iter().all(|v| v.is_finite()) => s,
                _ => return Ok(self.degraded(lin)),
            };
            let (dx, du) = cond.expand(&qs.z);
            let gap_norm: f64 = sqp.gaps.iter().map(|g| g.lp_norm(1)).sum::<f64>()
                + match self.initial {
                    InitialCondition::Fixed => sqp.initial_defect.lp_norm(1),
                    InitialCondition::Free { .. } => 0.0,
                };
            let kkt_residual = cond.qp.g.dot(&qs.z).abs() + gap_norm;
            for k in 0..=n {
                lin.states[k] += dx[k];
            }
            for k in 0..n {
                lin.inputs[k] = self.config.clamp_input(&(lin.inputs[k] + du[k]));
            }
            let multipliers = (0..qs.z.len()).map(|i| [qs.lambda_lower[i], qs.lambda_upper[i]]).collect();
            let status = match qs.status {
                QpStatus::Converged => SolveStatus::Converged,
                QpStatus::MaxIter => SolveStatus::MaxIter,
            };
            solution = Some(OcpSolution {
                states: lin.states.clone(),
                inputs: lin.inputs.clone(),
                multipliers,
                kkt_residual,
                objective: cond.qp.objective(&qs.z),
                warm_objective: cond.qp.constant,
                qp_kkt: qs.kkt.max(),
                status,
            });
            basis = Some(qs.working_set);
        }
        let solution = solution.expect("at least one iteration");
        let u0 = solution.inputs[0];
        self.last = Some((lin, basis.unwrap_or_default()));
        self.last_u0 = Some(u0);
        Ok(RtiOutput { u0, solution })
    }

    fn degraded(&mut self, lin: Trajectory) -> RtiOutput {
        let u0 = self.last_u0.unwrap_or(lin.inputs[0]);
        let solution = OcpSolution {
            states: lin.states.clone(),
            inputs: lin.inputs.clone(),
            multipliers: Vec::new(),
            kkt_residual: f64::NAN,
            objective: f64::NAN,
            warm_objective: f64::NAN,
            qp_kkt: f64::NAN,
            status: SolveStatus::Degraded,
        };
        RtiOutput { u0, solution }
    }
}

/// Hover linearization helpers shared with the baselines.
pub fn hover_input(mass: f64) -> InputVec {
    pack_input(mass * crate::plant::GRAVITY, &Vec3::zeros())
}

pub fn hover_state(p: &Vec3) -> StateVec {
    pack_state(p, &Vec3::zeros(), &Quat::identity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::hover_reference;
    use approx::assert_relative_eq;

    fn controller(period: f64) -> NmpcController {
        NmpcController::new(MpcConfig::default(), MpcWeights::default(), 1.0, period).unwrap()
    }

    fn hover_refs() -> Vec<ReferencePoint> {
        vec![crate::reference::flat_to_reference(&hover_reference(Vec3::new(0.0, 0.0, -1.0)), 1.0).unwrap(); 11]
    }

    #[test]
    fn on_reference_returns_reference_input() {
        let refs = hover_refs();
        let mut c = controller(0.01);
        for _ in 0..3 {
            let out = c.rti_step(&reference_state(&refs[0]), &Vec3::zeros(), &refs).unwrap();
            assert!((out.u0 - reference_input(&refs[0])).norm() < 1e-6);
            assert_eq!(out.solution.status, SolveStatus::Converged);
        }
    }

    #[test]
    fn tilts_against_lateral_disturbance() {
        let refs = hover_refs();
        let mut c = controller(0.01);
        let out = c.rti_step(&reference_state(&refs[0]), &Vec3::new(1.0, 0.0, 0.0), &refs).unwrap();
        // Pitching up (positive ω_y) rotates −z_B toward −x.
        assert!(out.u0[2] > 0.0, "{:?}", out.u0);
        let q1 = state_quat(&out.solution.states[1]);
        let z_b = crate::math::rotation_unchecked(&q1) * Vec3::z();
        assert!(z_b.x > 0.0);
    }

    #[test]
    fn shift_of_constant_hover_is_identity() {
        let refs = hover_refs();
        let mut c = controller(0.1);
        let out = c.rti_step(&reference_state(&refs[0]), &Vec3::zeros(), &refs).unwrap();
        let shifted = shift_warm_start(&out.solution, &Vec3::zeros(), 1.0, 0.1);
        assert_eq!(shifted.states.len(), out.solution.states.len());
        assert_eq!(shifted.inputs.len(), out.solution.inputs.len());
        for (a, b) in shifted.states.iter().zip(&out.solution.states) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn second_iteration_reduces_kkt() {
        let refs = hover_refs();
        let mut x = reference_state(&refs[0]);
        x[0] += 0.5;
        x[4] -= 0.3;
        let mut c1 = controller(0.01);
        let k1 = c1.rti_step(&x, &Vec3::zeros(), &refs).unwrap().solution.kkt_residual;
        let mut c2 = controller(0.01);
        c2.config.iterations = 2;
        let k2 = c2.rti_step(&x, &Vec3::zeros(), &refs).unwrap().solution.kkt_residual;
        assert!(k2 < k1, "{k2} vs {k1}");
    }
}
