use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;
const TOL: f64 = 1e-10;

fn gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let chol = s.cholesky().ok_or_else(|| Error::InvalidInput("R + BᵀPB is not positive definite".into()))?;
    Ok(chol.solve(&(btp * a)))
}

/// `‖P − (Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA)‖_max`
pub fn riccati_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    match gain(a, b, r, p) {
        Ok(k) => {
            let next = q + a.transpose() * p * a - a.transpose() * p * b * k;
            (p - next).amax()
        }
        Err(_) => f64::INFINITY,
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Discrete algebraic Riccati equation by fixed-point iteration from `P = Q`.
/// Returns `(P, K)` with `K = (R + BᵀPB)⁻¹BᵀPA`; the closed loop is `A − BK`.
pub fn dare_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.shape() != (n, n) || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let mut p = q.clone();
    for it in 0..MAX_ITER {
        let k = gain(a, b, r, &p)?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::RiccatiNoConvergence(it));
        }
        let delta = (&next - &p).amax();
        p = next;
        // Absolute tolerance, or the round-off floor for large P.
        if delta <= TOL.max(64.0 * f64::EPSILON * p.amax()) {
            let k = gain(a, b, r, &p)?;
            if spectral_radius(&(a - b * &k)) >= 1.0 {
                return Err(Error::RiccatiNoConvergence(it));
            }
            return Ok((p, k));
        }
    }
    Err(Error::RiccatiNoConvergence(MAX_ITER))
}
