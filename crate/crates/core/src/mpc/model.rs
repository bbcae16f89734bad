//! Prediction model `[ṗ, v̇, q̇] = h(x, u)` with a constant disturbance
//! estimate, and RK4 shooting with forward sensitivities.

use nalgebra::{Matrix3, SMatrix, SVector};

use crate::math::{body_z_with_jacobian, omega_matrix, quat_derivative_unchecked, xi_matrix, Quat, Vec3};
use crate::plant::gravity;

pub const NX: usize = 10;
pub const NU: usize = 4;

/// `[p, v, q]`
pub type StateVec = SVector<f64, NX>;
/// `[T_c, ω_c]`
pub type InputVec = SVector<f64, NU>;
pub type StateMat = SMatrix<f64, NX, NX>;
pub type InputMat = SMatrix<f64, NX, NU>;

pub fn pack_state(p: &Vec3, v: &Vec3, q: &Quat) -> StateVec {
    let mut x = StateVec::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(p);
    x.fixed_rows_mut::<3>(3).copy_from(v);
    x.fixed_rows_mut::<4>(6).copy_from(&q.to_vector());
    x
}

pub fn state_position(x: &StateVec) -> Vec3 {
    x.fixed_rows::<3>(0).into_owned()
}

pub fn state_velocity(x: &StateVec) -> Vec3 {
    x.fixed_rows::<3>(3).into_owned()
}

pub fn state_quat(x: &StateVec) -> Quat {
    Quat::new(x[6], x[7], x[8], x[9])
}

pub fn pack_input(thrust: f64, w: &Vec3) -> InputVec {
    InputVec::new(thrust, w.x, w.y, w.z)
}

pub fn input_rates(u: &InputVec) -> Vec3 {
    Vec3::new(u[1], u[2], u[3])
}

/// Nominal translational and attitude kinematics with `f̂_d` held constant.
pub fn prediction_derivative(x: &StateVec, u: &InputVec, f_hat: &Vec3, m: f64) -> StateVec {
    let q = state_quat(x);
    let (z_b, _) = body_z_with_jacobian(&q);
    let mut d = StateVec::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&state_velocity(x));
    d.fixed_rows_mut::<3>(3).copy_from(&(-(u[0] / m) * z_b + gravity() + f_hat / m));
    d.fixed_rows_mut::<4>(6).copy_from(&quat_derivative_unchecked(&q, &input_rates(u)));
    d
}

/// Jacobians of [`prediction_derivative`] with respect to state and input.
pub fn prediction_jacobians(x: &StateVec, u: &InputVec, m: f64) -> (StateMat, InputMat) {
    let q = state_quat(x);
    let (z_b, dz) = body_z_with_jacobian(&q);
    let mut a = StateMat::zeros();
    let mut b = InputMat::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 4>(3, 6).copy_from(&(-(u[0] / m) * dz));
    a.fixed_view_mut::<4, 4>(6, 6).copy_from(&(0.5 * omega_matrix(&input_rates(u))));
    b.fixed_view_mut::<3, 1>(3, 0).copy_from(&(-z_b / m));
    b.fixed_view_mut::<4, 3>(6, 1).copy_from(&(0.5 * xi_matrix(&q)));
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub x_next: StateVec,
    /// `∂x_next/∂x`
    pub a: StateMat,
    /// `∂x_next/∂u`
    pub b: InputMat,
}

/// RK4 over `dt` with the input held; sensitivities propagated through the stages.
pub fn shoot(x0: &StateVec, u: &InputVec, f_hat: &Vec3, m: f64, dt: f64) -> Shot {
    let f = |x: &StateVec| prediction_derivative(x, u, f_hat, m);
    let jac = |x: &StateVec| prediction_jacobians(x, u, m);

    let k1 = f(x0);
    let (j1x, j1u) = jac(x0);
    let (s1x, s1u) = (j1x, j1u);

    let x2 = x0 + 0.5 * dt * k1;
    let k2 = f(&x2);
    let (j2x, j2u) = jac(&x2);
    let s2x = j2x + 0.5 * dt * j2x * s1x;
    let s2u = j2u + 0.5 * dt * j2x * s1u;

    let x3 = x0 + 0.5 * dt * k2;
    let k3 = f(&x3);
    let (j3x, j3u) = jac(&x3);
    let s3x = j3x + 0.5 * dt * j3x * s2x;
    let s3u = j3u + 0.5 * dt * j3x * s2u;

    let x4 = x0 + dt * k3;
    let k4 = f(&x4);
    let (j4x, j4u) = jac(&x4);
    let s4x = j4x + dt * j4x * s3x;
    let s4u = j4u + dt * j4x * s3u;

    let c = dt / 6.0;
    Shot {
        x_next: x0 + c * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
        a: StateMat::identity() + c * (s1x + 2.0 * s2x + 2.0 * s3x + s4x),
        b: c * (s1u + 2.0 * s2u + 2.0 * s3u + s4u),
    }
}

/// RK4 propagation without sensitivities.
pub fn integrate(x0: &StateVec, u: &InputVec, f_hat: &Vec3, m: f64, dt: f64) -> StateVec {
    let f = |x: &StateVec| prediction_derivative(x, u, f_hat, m);
    let k1 = f(x0);
    let k2 = f(&(x0 + 0.5 * dt * k1));
    let k3 = f(&(x0 + 0.5 * dt * k2));
    let k4 = f(&(x0 + dt * k3));
    x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}
