//! Dense box-constrained QP `min ½zᵀHz + gᵀz + c, lb ≤ z ≤ ub` solved by a
//! primal active-set method with warm-startable working set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub constant: f64,
}

impl DenseQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z) + self.constant
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.h * z + &self.g
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        if self.h.shape() != (n, n) || self.lb.len() != n || self.ub.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "H {:?}, g {}, lb {}, ub {}",
                self.h.shape(),
                n,
                self.lb.len(),
                self.ub.len()
            )));
        }
        if self.lb.iter().zip(self.ub.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("lower bound above upper bound".into()));
        }
        Ok(())
    }
}

/// Working-set membership of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundState {
    #[default]
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Multipliers below `-tol` leave the working set.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Bound multipliers, `≥ 0` on the lower and upper sides.
    pub lambda_lower: DVector<f64>,
    pub lambda_upper: DVector<f64>,
    pub working_set: Vec<BoundState>,
    pub kkt: KktResidual,
    pub iterations: usize,
    pub status: QpStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Residuals of the KKT conditions for a given primal/dual pair.
pub fn kkt_residual(qp: &DenseQp, z: &DVector<f64>, ll: &DVector<f64>, lu: &DVector<f64>) -> KktResidual {
    let r = qp.gradient(z) - ll + lu;
    let mut k = KktResidual { stationarity: r.amax(), ..Default::default() };
    for i in 0..qp.dim() {
        k.primal = k.primal.max(qp.lb[i] - z[i]).max(z[i] - qp.ub[i]);
        k.dual = k.dual.max(-ll[i]).max(-lu[i]);
        let cl = if ll[i] != 0.0 { (ll[i] * (z[i] - qp.lb[i])).abs() } else { 0.0 };
        let cu = if lu[i] != 0.0 { (lu[i] * (qp.ub[i] - z[i])).abs() } else { 0.0 };
        k.complementarity = k.complementarity.max(cl).max(cu);
    }
    k
}

/// Solves the reduced system `H_FF z_F = −(g_F + H_FA z_A)` on the free set.
fn solve_free(qp: &DenseQp, z: &DVector<f64>, free: &[usize], fixed: &[usize]) -> Result<DVector<f64>> {
    let nf = free.len();
    let mut hff = DMatrix::zeros(nf, nf);
    let mut rhs = DVector::zeros(nf);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            hff[(a, b)] = qp.h[(i, j)];
        }
        let mut s = qp.g[i];
        for &j in fixed {
            s += qp.h[(i, j)] * z[j];
        }
        rhs[a] = -s;
    }
    let chol = hff.cholesky().ok_or(Error::NonConvex)?;
    Ok(chol.solve(&rhs))
}

/// Primal active-set solve. `warm` seeds the working set; entries whose bound
/// is infinite are ignored. Ties are broken by smallest index.
pub fn qp_solve(qp: &DenseQp, warm: Option<&[BoundState]>, opts: &QpOptions) -> Result<QpSolution> {
    qp.check()?;
    let n = qp.dim();
    let mut ws = vec![BoundState::Free; n];
    if let Some(w) = warm {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!("warm basis {} for {} variables", w.len(), n)));
        }
        for i in 0..n {
            ws[i] = match w[i] {
                BoundState::Lower if qp.lb[i].is_finite() => BoundState::Lower,
                BoundState::Upper if qp.ub[i].is_finite() => BoundState::Upper,
                _ => BoundState::Free,
            };
        }
    }
    let mut z = DVector::zeros(n);
    for i in 0..n {
        z[i] = match ws[i] {
            BoundState::Lower => qp.lb[i],
            BoundState::Upper => qp.ub[i],
            BoundState::Free => 0.0f64.clamp(qp.lb[i], qp.ub[i]),
        };
    }
    let scale = 1.0 + qp.h.amax() + qp.g.amax();
    let step_tol = 1e-14 * scale;

    let mut status = QpStatus::MaxIter;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| ws[i] == BoundState::Free).collect();
        let fixed: Vec<usize> = (0..n).filter(|&i| ws[i] != BoundState::Free).collect();
        let target = solve_free(qp, &z, &free, &fixed)?;
        let step: Vec<f64> = free.iter().zip(target.iter()).map(|(&i, t)| t - z[i]).collect();
        let step_norm = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));

        if step_norm <= step_tol * (1.0 + z.amax()) {
            for (&i, t) in free.iter().zip(target.iter()) {
                z[i] = *t;
            }
            let grad = qp.gradient(&z);
            let mut leave: Option<(usize, f64)> = None;
            for &i in &fixed {
                let mu = if ws[i] == BoundState::Lower { grad[i] } else { -grad[i] };
                if mu < -opts.tol && leave.is_none_or(|(_, m)| mu < m) {
                    leave = Some((i, mu));
                }
            }
            match leave {
                Some((i, _)) => ws[i] = BoundState::Free,
                None => {
                    status = QpStatus::Converged;
                    break;
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking: Option<(usize, BoundState)> = None;
        for (&i, &p) in free.iter().zip(step.iter()) {
            let candidate = if p < 0.0 && qp.lb[i].is_finite() {
                Some(((qp.lb[i] - z[i]) / p, BoundState::Lower))
            } else if p > 0.0 && qp.ub[i].is_finite() {
                Some(((qp.ub[i] - z[i]) / p, BoundState::Upper))
            } else {
                None
            };
            if let Some((a, side)) = candidate {
                if a < alpha {
                    alpha = a.max(0.0);
                    blocking = Some((i, side));
                }
            }
        }
        for (&i, &p) in free.iter().zip(step.iter()) {
            z[i] += alpha * p;
        }
        if let Some((i, side)) = blocking {
            ws[i] = side;
            z[i] = if side == BoundState::Lower { qp.lb[i] } else { qp.ub[i] };
        }
    }

    for i in 0..n {
        z[i] = z[i].clamp(qp.lb[i], qp.ub[i]);
    }
    let grad = qp.gradient(&z);
    let mut ll = DVector::zeros(n);
    let mut lu = DVector::zeros(n);
    for i in 0..n {
        match ws[i] {
            BoundState::Lower => ll[i] = grad[i],
            BoundState::Upper => lu[i] = -grad[i],
            BoundState::Free => {}
        }
    }
    let kkt = kkt_residual(qp, &z, &ll, &lu);
    Ok(QpSolution { z, lambda_lower: ll, lambda_upper: lu, working_set: ws, kkt, iterations, status })
}
