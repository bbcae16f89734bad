//! Rigid-body quadrotor dynamics in the north-east-down world frame, the rotor
//! mixing map and a fixed-step RK4 integrator.

use nalgebra::{Matrix3, Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    body_z_with_jacobian, omega_matrix, quat_derivative_unchecked, quat_normalize, rotation_unchecked,
    xi_matrix, Quat, Vec3, UNIT_TOL,
};

pub const GRAVITY: f64 = 9.81;

pub fn gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, GRAVITY)
}

/// Physical parameters of the simulated vehicle.
///
/// The rotor displacements default to `l/√2` for an X-frame with arm length
/// `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    /// Diagonal of the inertia matrix, kg·m².
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub thrust_to_weight: f64,
    pub torque_limits: [f64; 3],
    pub d_x: f64,
    pub d_y: f64,
    pub c_tau: f64,
    /// Route wrenches through per-rotor allocation and clamping.
    pub motor_allocation: bool,
}

impl Default for QuadParams {
    fn default() -> Self {
        let l = 0.17;
        Self {
            mass: 1.0,
            inertia: [2.64e-3, 2.64e-3, 4.96e-3],
            arm_length: l,
            thrust_to_weight: 4.0,
            torque_limits: [0.5, 0.5, 0.5],
            d_x: l / std::f64::consts::SQRT_2,
            d_y: l / std::f64::consts::SQRT_2,
            c_tau: 0.013,
            motor_allocation: false,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {}", self.mass)));
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return Err(Error::InvalidInput("inertia diagonal must be positive".into()));
        }
        if !(self.thrust_to_weight > 1.0) {
            return Err(Error::InvalidInput("thrust_to_weight must exceed 1".into()));
        }
        if self.torque_limits.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidInput("torque limits must be positive".into()));
        }
        if !(self.d_x > 0.0 && self.d_y > 0.0 && self.c_tau > 0.0) {
            return Err(Error::InvalidInput("mixer constants must be positive".into()));
        }
        Ok(())
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::from(self.inertia))
    }

    pub fn inertia_inverse(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::new(1.0 / self.inertia[0], 1.0 / self.inertia[1], 1.0 / self.inertia[2]))
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * GRAVITY
    }

    pub fn max_thrust(&self) -> f64 {
        self.thrust_to_weight * self.mass * GRAVITY
    }

    pub fn max_rotor_thrust(&self) -> f64 {
        self.max_thrust() / 4.0
    }

    fn mixer(&self) -> Matrix4<f64> {
        let (dx, dy, c) = (self.d_x, self.d_y, self.c_tau);
        Matrix4::new(
            1.0, 1.0, 1.0, 1.0, //
            -dy, -dy, dy, dy, //
            -dx, dx, dx, -dx, //
            -c, c, -c, c,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: Vec3,
    pub v: Vec3,
    pub q: Quat,
    pub w: Vec3,
}

impl QuadState {
    pub fn at_rest(p: Vec3) -> Self {
        Self { p, v: Vec3::zeros(), q: Quat::identity(), w: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.w.iter()).all(|x| x.is_finite()) && self.q.is_finite()
    }
}

/// Collective thrust (N, along body −z) and body torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub thrust: f64,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(thrust: f64, torque: Vec3) -> Self {
        Self { thrust, torque }
    }

    pub fn hover(params: &QuadParams) -> Self {
        Self::new(params.hover_thrust(), Vec3::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p: Vec3,
    pub v: Vec3,
    pub q: Vector4<f64>,
    pub w: Vec3,
}

const LIMIT_SLACK: f64 = 1e-9;

fn check_wrench(w: &Wrench, params: &QuadParams) -> Result<()> {
    if !(w.thrust >= -LIMIT_SLACK && w.thrust <= params.max_thrust() * (1.0 + LIMIT_SLACK)) {
        return Err(Error::InvalidInput(format!("collective thrust {} outside [0, {}]", w.thrust, params.max_thrust())));
    }
    for i in 0..3 {
        if !(w.torque[i].abs() <= params.torque_limits[i] + LIMIT_SLACK) {
            return Err(Error::InvalidInput(format!("torque[{i}] = {} exceeds limit", w.torque[i])));
        }
    }
    Ok(())
}

fn derivative_unchecked(s: &QuadState, wr: &Wrench, f_d: &Vec3, tau_d: &Vec3, params: &QuadParams) -> StateDerivative {
    let m = params.mass;
    let r = rotation_unchecked(&s.q);
    let j = params.inertia_matrix();
    let j_inv = params.inertia_inverse();
    StateDerivative {
        p: s.v,
        v: -(wr.thrust / m) * r.column(2) + gravity() + f_d / m,
        q: quat_derivative_unchecked(&s.q, &s.w),
        w: j_inv * (wr.torque - s.w.cross(&(j * s.w))) + j_inv * tau_d,
    }
}

/// Time derivative of the full rigid-body state under a wrench and injected
/// force/torque disturbances.
pub fn dynamics_derivative(
    s: &QuadState,
    wr: &Wrench,
    f_d: &Vec3,
    tau_d: &Vec3,
    params: &QuadParams,
) -> Result<StateDerivative> {
    if !s.is_finite() {
        return Err(Error::InvalidInput("non-finite state".into()));
    }
    if (s.q.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput("state quaternion is not unit".into()));
    }
    check_wrench(wr, params)?;
    Ok(derivative_unchecked(s, wr, f_d, tau_d, params))
}

/// Jacobians of the 13-dimensional state derivative `[p, v, q, ω]` with respect
/// to the state and to the wrench `[T, τ]`.
pub fn dynamics_jacobian(s: &QuadState, wr: &Wrench, params: &QuadParams) -> (SMatrix<f64, 13, 13>, SMatrix<f64, 13, 4>) {
    let m = params.mass;
    let j = params.inertia_matrix();
    let j_inv = params.inertia_inverse();
    let (z_b, dz_dq) = body_z_with_jacobian(&s.q);
    let mut a = SMatrix::<f64, 13, 13>::zeros();
    let mut b = SMatrix::<f64, 13, 4>::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 4>(3, 6).copy_from(&(-(wr.thrust / m) * dz_dq));
    a.fixed_view_mut::<4, 4>(6, 6).copy_from(&(0.5 * omega_matrix(&s.w)));
    a.fixed_view_mut::<4, 3>(6, 10).copy_from(&(0.5 * xi_matrix(&s.q)));
    let jw = j * s.w;
    let d_gyro = s.w.cross_matrix() * j - jw.cross_matrix();
    a.fixed_view_mut::<3, 3>(10, 10).copy_from(&(-j_inv * d_gyro));
    b.fixed_view_mut::<3, 1>(3, 0).copy_from(&(-z_b / m));
    b.fixed_view_mut::<3, 3>(10, 1).copy_from(&j_inv);
    (a, b)
}

fn advance(s: &QuadState, d: &StateDerivative, h: f64) -> QuadState {
    QuadState {
        p: s.p + h * d.p,
        v: s.v + h * d.v,
        q: Quat::from_vector(&(s.q.to_vector() + h * d.q)),
        w: s.w + h * d.w,
    }
}

/// One classical RK4 step with inputs and disturbances held, followed by
/// quaternion renormalization.
pub fn rk4_step(
    s: &QuadState,
    wr: &Wrench,
    f_d: &Vec3,
    tau_d: &Vec3,
    params: &QuadParams,
    h: f64,
) -> Result<QuadState> {
    if !(h > 0.0 && h <= 0.01) {
        return Err(Error::InvalidInput(format!("step size {h} outside (0, 0.01]")));
    }
    let f = |x: &QuadState| derivative_unchecked(x, wr, f_d, tau_d, params);
    let k1 = f(s);
    let k2 = f(&advance(s, &k1, 0.5 * h));
    let k3 = f(&advance(s, &k2, 0.5 * h));
    let k4 = f(&advance(s, &k3, h));
    let sum = StateDerivative {
        p: k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p,
        v: k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v,
        q: k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q,
        w: k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w,
    };
    let mut next = advance(s, &sum, h / 6.0);
    next.q = quat_normalize(&next.q)?;
    Ok(next)
}

pub fn mix_motors(thrusts: &[f64; 4], params: &QuadParams) -> Result<Wrench> {
    if let Some(t) = thrusts.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative rotor thrust {t}")));
    }
    let u = params.mixer() * Vector4::from(*thrusts);
    Ok(Wrench::new(u[0], Vec3::new(u[1], u[2], u[3])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub thrusts: [f64; 4],
    pub saturated: bool,
}

/// Inverts the mixer and clamps each rotor to `[0, max_rotor_thrust]`.
pub fn allocate_motors(wr: &Wrench, params: &QuadParams) -> Allocation {
    let inv = params.mixer().try_inverse().expect("mixer is invertible for positive constants");
    let raw = inv * Vector4::new(wr.thrust, wr.torque.x, wr.torque.y, wr.torque.z);
    let hi = params.max_rotor_thrust();
    let mut saturated = false;
    let mut thrusts = [0.0; 4];
    for (t, r) in thrusts.iter_mut().zip(raw.iter()) {
        let c = r.clamp(0.0, hi);
        if (c - r).abs() > 1e-12 {
            saturated = true;
        }
        *t = c;
    }
    Allocation { thrusts, saturated }
}

pub fn saturate_wrench(wr: &Wrench, params: &QuadParams) -> Wrench {
    let lim = Vec3::from(params.torque_limits);
    Wrench::new(
        wr.thrust.clamp(0.0, params.max_thrust()),
        Vec3::new(
            wr.torque.x.clamp(-lim.x, lim.x),
            wr.torque.y.clamp(-lim.y, lim.y),
            wr.torque.z.clamp(-lim.z, lim.z),
        ),
    )
}

/// A simulated vehicle: parameters plus the current state.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: QuadParams,
    pub state: QuadState,
}

impl Plant {
    pub fn new(params: QuadParams, state: QuadState) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state })
    }

    /// Saturates (and optionally allocates) the commanded wrench, advances one
    /// step, and returns the wrench actually applied.
    pub fn step(&mut self, cmd: &Wrench, f_d: &Vec3, tau_d: &Vec3, h: f64) -> Result<Wrench> {
        let mut applied = saturate_wrench(cmd, &self.params);
        if self.params.motor_allocation {
            let alloc = allocate_motors(&applied, &self.params);
            applied = mix_motors(&alloc.thrusts, &self.params)?;
        }
        self.state = rk4_step(&self.state, &applied, f_d, tau_d, &self.params, h)?;
        Ok(applied)
    }
}
