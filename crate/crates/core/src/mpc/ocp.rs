//! Multiple-shooting Gauss-Newton subproblem and its condensed form.

use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};

use super::model::{pack_input, pack_state, shoot, InputMat, InputVec, StateMat, StateVec, NU, NX};
use crate::error::{Error, Result};
use crate::math::{quat_align_sign, Quat, Vec3};
use crate::plant::{gravity, QuadParams};
use crate::reference::ReferencePoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcWeights {
    pub q_p: [f64; 3],
    pub q_v: [f64; 3],
    pub q_q: [f64; 4],
    pub r: [f64; 4],
    pub p_p: [f64; 3],
    pub p_v: [f64; 3],
    pub p_q: [f64; 4],
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            q_p: [1500.0; 3],
            q_v: [400.0; 3],
            q_q: [500.0; 4],
            r: [1.0, 10.0, 10.0, 10.0],
            p_p: [1500.0; 3],
            p_v: [400.0; 3],
            p_q: [500.0; 4],
        }
    }
}

fn stack(p: &[f64; 3], v: &[f64; 3], q: &[f64; 4]) -> StateVec {
    StateVec::from_iterator(p.iter().chain(v).chain(q).copied())
}

impl MpcWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self.q_p.iter().chain(&self.q_v).chain(&self.q_q).chain(&self.r).chain(&self.p_p).chain(&self.p_v).chain(&self.p_q);
        if all.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        if self.r.iter().any(|r| *r <= 0.0) {
            return Err(Error::InvalidInput("input weights must be positive".into()));
        }
        Ok(())
    }

    pub fn stage_state(&self) -> StateVec {
        stack(&self.q_p, &self.q_v, &self.q_q)
    }

    pub fn terminal_state(&self) -> StateVec {
        stack(&self.p_p, &self.p_v, &self.p_q)
    }

    pub fn input(&self) -> InputVec {
        InputVec::from(self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
    /// Gauss-Newton iterations per control step.
    pub iterations: usize,
    pub kkt_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self::for_params(&QuadParams::default())
    }
}

impl MpcConfig {
    /// Thrust in `[0.2 mg, T/W · mg]`, rates within ±3 rad/s.
    pub fn for_params(p: &QuadParams) -> Self {
        Self {
            horizon: 10,
            dt: 0.1,
            thrust_min: 0.2 * p.mass * gravity().z,
            thrust_max: p.max_thrust(),
            rate_max: 3.0,
            iterations: 1,
            kkt_tol: 1e-8,
            qp_max_iter: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if !(self.thrust_min >= 0.0 && self.thrust_min <= self.thrust_max && self.rate_max >= 0.0) {
            return Err(Error::InvalidInput("inconsistent input bounds".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidInput("at least one iteration per solve".into()));
        }
        Ok(())
    }

    pub fn input_lower(&self) -> InputVec {
        InputVec::new(self.thrust_min, -self.rate_max, -self.rate_max, -self.rate_max)
    }

    pub fn input_upper(&self) -> InputVec {
        InputVec::new(self.thrust_max, self.rate_max, self.rate_max, self.rate_max)
    }

    pub fn clamp_input(&self, u: &InputVec) -> InputVec {
        u.zip_zip_map(&self.input_lower(), &self.input_upper(), |x, l, h| x.clamp(l, h))
    }
}

/// How the first shooting node is tied to the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `x_0 = x_meas`
    Fixed,
    /// `x_0` is a decision variable with cost `ρ‖x_0 − x_meas‖²`.
    Free { penalty: f64 },
}

pub fn reference_state(r: &ReferencePoint) -> StateVec {
    pack_state(&r.p, &r.v, &r.q)
}

pub fn reference_input(r: &ReferencePoint) -> InputVec {
    pack_input(r.thrust, &r.w)
}

/// Linearization trajectory: `N+1` states and `N` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub inputs: Vec<InputVec>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.inputs.len() != n || self.states.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "trajectory with {} states and {} inputs for horizon {}",
                self.states.len(),
                self.inputs.len(),
                n
            )));
        }
        Ok(())
    }
}

/// Sparse Gauss-Newton subproblem in the steps `(δx_k, δu_k)`:
/// `Σ‖r_k + δx_k‖²_{W_k} + Σ‖s_k + δu_k‖²_R (+ ρ‖δx_0 − d_0‖²)`
/// subject to `δx_{k+1} = A_k δx_k + B_k δu_k + c_k` and input bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingQp {
    pub a: Vec<StateMat>,
    pub b: Vec<InputMat>,
    /// Shooting gaps `F(x̄_k, ū_k) − x̄_{k+1}`.
    pub gaps: Vec<StateVec>,
    pub state_weights: Vec<StateVec>,
    pub input_weight: InputVec,
    /// `x̄_k − x_{r,k}` with aligned reference quaternions.
    pub state_residuals: Vec<StateVec>,
    pub input_residuals: Vec<InputVec>,
    pub du_lower: Vec<InputVec>,
    pub du_upper: Vec<InputVec>,
    /// `x_meas − x̄_0`
    pub initial_defect: StateVec,
    pub initial: InitialCondition,
}

#[allow(clippy::too_many_arguments)]
pub fn build_qp(
    x_init: &StateVec,
    refs: &[ReferencePoint],
    f_hat: &Vec3,
    mass: f64,
    weights: &MpcWeights,
    config: &MpcConfig,
    lin: &Trajectory,
    initial: InitialCondition,
) -> Result<ShootingQp> {
    let n = config.horizon;
    lin.check(n)?;
    if refs.len() != n + 1 {
        return Err(Error::DimensionMismatch(format!("{} references for horizon {}", refs.len(), n)));
    }
    let (mut a, mut b, mut gaps) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let shot = shoot(&lin.states[k], &lin.inputs[k], f_hat, mass, config.dt);
        gaps.push(shot.x_next - lin.states[k + 1]);
        a.push(shot.a);
        b.push(shot.b);
    }
    let state_residuals = (0..=n)
        .map(|k| {
            let x = &lin.states[k];
            let q_lin = Quat::new(x[6], x[7], x[8], x[9]);
            let q_ref = quat_align_sign(&q_lin, &refs[k].q);
            x - pack_state(&refs[k].p, &refs[k].v, &q_ref)
        })
        .collect();
    let input_residuals = (0..n).map(|k| lin.inputs[k] - reference_input(&refs[k])).collect();
    let (lo, hi) = (config.input_lower(), config.input_upper());
    let mut state_weights = vec![weights.stage_state(); n];
    state_weights.push(weights.terminal_state());
    Ok(ShootingQp {
        a,
        b,
        gaps,
        state_weights,
        input_weight: weights.input(),
        state_residuals,
        input_residuals,
        du_lower: lin.inputs.iter().map(|u| lo - u).collect(),
        du_upper: lin.inputs.iter().map(|u| hi - u).collect(),
        initial_defect: x_init - lin.states[0],
        initial,
    })
}

/// Condensed problem and the affine maps `δx_k = M_k z + h_k` used to expand it.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub qp: super::qp::DenseQp,
    state_maps: Vec<DMatrix<f64>>,
    state_offsets: Vec<StateVec>,
    x0_dim: usize,
}

impl ShootingQp {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    fn x0_dim(&self) -> usize {
        match self.initial {
            InitialCondition::Fixed => 0,
            InitialCondition::Free { .. } => NX,
        }
    }

    /// Value of the sparse objective at the given steps (dynamics not enforced).
    pub fn objective(&self, dx: &[StateVec], du: &[InputVec]) -> f64 {
        let mut v = 0.0;
        for (k, w) in self.state_weights.iter().enumerate() {
            let e = self.state_residuals[k] + dx[k];
            v += e.component_mul(&e).dot(w);
        }
        for k in 0..self.horizon() {
            let e = self.input_residuals[k] + du[k];
            v += e.component_mul(&e).dot(&self.input_weight);
        }
        if let InitialCondition::Free { penalty } = self.initial {
            v += penalty * (dx[0] - self.initial_defect).norm_squared();
        }
        v
    }

    /// Eliminates the states through the linearized dynamics. Decision vector
    /// is `[δx_0 (free initial state only), δu_0, …, δu_{N−1}]`.
    pub fn condense(&self) -> CondensedQp {
        let n = self.horizon();
        let nx0 = self.x0_dim();
        let nz = nx0 + NU * n;
        let mut maps = Vec::with_capacity(n + 1);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut m0 = DMatrix::zeros(NX, nz);
        let h0 = match self.initial {
            InitialCondition::Fixed => self.initial_defect,
            InitialCondition::Free { .. } => {
                m0.view_mut((0, 0), (NX, NX)).fill_with_identity();
                StateVec::zeros()
            }
        };
        maps.push(m0);
        offsets.push(h0);
        for k in 0..n {
            let prev = &maps[k];
            // Columns beyond the inputs applied so far are zero.
            let used = nx0 + NU * k;
            let mut next = DMatrix::zeros(NX, nz);
            if used > 0 {
                let ak = DMatrix::from_column_slice(NX, NX, self.a[k].as_slice());
                next.view_mut((0, 0), (NX, used)).copy_from(&(ak * prev.view((0, 0), (NX, used))));
            }
            next.view_mut((0, used), (NX, NU)).copy_from(&self.b[k]);
            let h = self.a[k] * offsets[k] + self.gaps[k];
            maps.push(next);
            offsets.push(h);
        }

        let mut h = DMatrix::zeros(nz, nz);
        let mut g = DVector::zeros(nz);
        let mut constant = 0.0;
        for k in 0..=n {
            let used = (nx0 + NU * k).min(nz);
            if k == n {
                debug_assert_eq!(used, nz);
            }
            let w = &self.state_weights[k];
            let e = self.state_residuals[k] + offsets[k];
            constant += e.component_mul(&e).dot(w);
            if used == 0 {
                continue;
            }
            let m = maps[k].view((0, 0), (NX, used));
            let mut wm = m.clone_owned();
            for r in 0..NX {
                wm.row_mut(r).scale_mut(w[r]);
            }
            let mut hb = h.view_mut((0, 0), (used, used));
            hb.gemm_tr(2.0, &m, &wm, 1.0);
            let we = DVector::from_iterator(NX, w.component_mul(&e).iter().copied());
            let mut gb = g.rows_mut(0, used);
            gb.gemv_tr(2.0, &m, &we, 1.0);
        }
        for k in 0..n {
            let o = nx0 + NU * k;
            let s = self.input_residuals[k];
            for i in 0..NU {
                h[(o + i, o + i)] += 2.0 * self.input_weight[i];
                g[o + i] += 2.0 * self.input_weight[i] * s[i];
            }
            constant += s.component_mul(&s).dot(&self.input_weight);
        }
        if let InitialCondition::Free { penalty } = self.initial {
            for i in 0..NX {
                h[(i, i)] += 2.0 * penalty;
                g[i] -= 2.0 * penalty * self.initial_defect[i];
            }
            constant += penalty * self.initial_defect.norm_squared();
        }
        // Symmetrize against round-off.
        let h = (&h + h.transpose()) * 0.5;

        let mut lb = DVector::from_element(nz, f64::NEG_INFINITY);
        let mut ub = DVector::from_element(nz, f64::INFINITY);
        for k in 0..n {
            let o = nx0 + NU * k;
            lb.rows_mut(o, NU).copy_from(&self.du_lower[k]);
            ub.rows_mut(o, NU).copy_from(&self.du_upper[k]);
        }
        CondensedQp {
            qp: super::qp::DenseQp { h, g, lb, ub, constant },
            state_maps: maps,
            state_offsets: offsets,
            x0_dim: nx0,
        }
    }
}

impl CondensedQp {
    /// Recovers `(δx_k, δu_k)` from the condensed decision vector.
    pub fn expand(&self, z: &DVector<f64>) -> (Vec<StateVec>, Vec<InputVec>) {
        let dx = self
            .state_maps
            .iter()
            .zip(&self.state_offsets)
            .map(|(m, h)| StateVec::from_iterator((m * z).iter().copied()) + h)
            .collect();
        let n = self.state_maps.len() - 1;
        let du = (0..n).map(|k| SVector::<f64, NU>::from_iterator(z.rows(self.x0_dim + NU * k, NU).iter().copied())).collect();
        (dx, du)
    }

    pub fn x0_dim(&self) -> usize {
        self.x0_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::qp::{qp_solve, QpOptions};
    use crate::reference::hover_reference;
    use approx::assert_relative_eq;

    fn hover_refs(n: usize) -> Vec<ReferencePoint> {
        vec![crate::reference::flat_to_reference(&hover_reference(Vec3::new(0.0, 0.0, -1.0)), 1.0).unwrap(); n + 1]
    }

    fn at_refs(refs: &[ReferencePoint]) -> Trajectory {
        Trajectory {
            states: refs.iter().map(reference_state).collect(),
            inputs: refs[..refs.len() - 1].iter().map(reference_input).collect(),
        }
    }

    #[test]
    fn zero_error_gives_zero_step() {
        let cfg = MpcConfig::default();
        let refs = hover_refs(cfg.horizon);
        let lin = at_refs(&refs);
        let x0 = lin.states[0];
        let sqp = build_qp(&x0, &refs, &Vec3::zeros(), 1.0, &MpcWeights::default(), &cfg, &lin, InitialCondition::Fixed).unwrap();
        let c = sqp.condense();
        assert_eq!(c.qp.dim(), 40);
        let s = qp_solve(&c.qp, None, &QpOptions::default()).unwrap();
        assert!(s.z.amax() < 1e-12);
        assert!(c.qp.constant.abs() < 1e-20);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = MpcConfig::default();
        let refs = hover_refs(cfg.horizon);
        let lin = at_refs(&refs);
        let short = &refs[..5];
        let r = build_qp(&lin.states[0], short, &Vec3::zeros(), 1.0, &MpcWeights::default(), &cfg, &lin, InitialCondition::Fixed);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn condensed_objective_matches_sparse_objective() {
        let cfg = MpcConfig { horizon: 4, ..Default::default() };
        let refs = hover_refs(4);
        let mut lin = at_refs(&refs);
        lin.states[2][0] += 0.3;
        lin.inputs[1][2] += 0.2;
        let x0 = lin.states[0] + StateVec::from_element(0.01);
        for initial in [InitialCondition::Fixed, InitialCondition::Free { penalty: 1e4 }] {
            let sqp = build_qp(&x0, &refs, &Vec3::new(0.2, 0.0, 0.0), 1.0, &MpcWeights::default(), &cfg, &lin, initial).unwrap();
            let c = sqp.condense();
            let z = DVector::from_fn(c.qp.dim(), |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.05);
            let (dx, du) = c.expand(&z);
            for k in 0..4 {
                let pred = sqp.a[k] * dx[k] + sqp.b[k] * du[k] + sqp.gaps[k];
                assert_relative_eq!(pred, dx[k + 1], epsilon = 1e-12);
            }
            assert_relative_eq!(c.qp.objective(&z), sqp.objective(&dx, &du), max_relative = 1e-12);
        }
    }

    #[test]
    fn thrust_reference_above_limit_clamps() {
        let cfg = MpcConfig::default();
        let mut refs = hover_refs(cfg.horizon);
        for r in refs.iter_mut() {
            r.thrust = cfg.thrust_max + 5.0;
        }
        let lin = at_refs(&hover_refs(cfg.horizon));
        let w = MpcWeights { q_p: [0.0; 3], q_v: [0.0; 3], q_q: [0.0; 4], p_p: [0.0; 3], p_v: [0.0; 3], p_q: [0.0; 4], ..Default::default() };
        let sqp = build_qp(&lin.states[0], &refs, &Vec3::zeros(), 1.0, &w, &cfg, &lin, InitialCondition::Fixed).unwrap();
        let c = sqp.condense();
        let s = qp_solve(&c.qp, None, &QpOptions::default()).unwrap();
        let (_, du) = c.expand(&s.z);
        for k in 0..cfg.horizon {
            assert_eq!(lin.inputs[k][0] + du[k][0], cfg.thrust_max);
        }
    }

    #[test]
    fn one_step_vertical_lqr() {
        // Vertical channel only: z-position weight, thrust weight; one node.
        let cfg = MpcConfig { horizon: 1, ..Default::default() };
        let w = MpcWeights {
            q_p: [0.0; 3],
            q_v: [0.0; 3],
            q_q: [0.0; 4],
            p_p: [0.0, 0.0, 100.0],
            p_v: [0.0; 3],
            p_q: [0.0; 4],
            r: [1.0, 1.0, 1.0, 1.0],
        };
        let refs = hover_refs(1);
        let lin = at_refs(&refs);
        let mut x0 = lin.states[0];
        x0[2] += 0.2;
        let sqp = build_qp(&x0, &refs, &Vec3::zeros(), 1.0, &w, &cfg, &lin, InitialCondition::Fixed).unwrap();
        let s = qp_solve(&sqp.condense().qp, None, &QpOptions::default()).unwrap();
        // z_1 = z_0 + b δT with b = −dt²/(2m); minimize P(z_0 + bδT)² + RδT².
        let (b, p, r, e) = (-cfg.dt * cfg.dt / 2.0, 100.0, 1.0, 0.2);
        let expected = -p * b * e / (p * b * b + r);
        assert_relative_eq!(s.z[0], expected, max_relative = 1e-9);
        assert!(s.z.rows(1, 3).amax() < 1e-12);
    }
}
