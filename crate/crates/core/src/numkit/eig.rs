use crate::error::{Error, Result};

use super::Matrix;

/// `M = P · diag(D) · Pᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigSymResult {
    pub p: Matrix,
    pub d: Vec<f64>,
}

impl EigSymResult {
    pub fn reconstruct(&self) -> Matrix {
        self.p.scale_columns(&self.d).dot(&self.p.transpose())
    }
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic two-sided Jacobi rotations.
///
/// The input is symmetrized as `(M + Mᵀ)/2`. Negative eigenvalues whose
/// magnitude is at roundoff level relative to `‖M‖_F` are clamped to zero,
/// so PSD inputs such as `X·Xᵀ` yield a non-negative spectrum.
pub fn eig_sym(m: &Matrix) -> Result<EigSymResult> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let n = rows;
    let mut a = m.add(&m.transpose()).scale(0.5);
    let mut p = Matrix::identity(n);
    let scale = a.frobenius_norm();
    // off-diagonal entries below roundoff of the whole matrix cannot be
    // reduced further and move eigenvalues by at most that much
    let floor = f64::EPSILON * scale;

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let aij = a[(i, j)];
                if aij.abs() <= floor
                    || aij.abs() <= f64::EPSILON * (a[(i, i)] * a[(j, j)]).abs().sqrt()
                {
                    continue;
                }
                rotated = true;
                let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                // A ← Jᵀ A J with J the (i, j) plane rotation
                for k in 0..n {
                    let (aki, akj) = (a[(k, i)], a[(k, j)]);
                    a[(k, i)] = c * aki - s * akj;
                    a[(k, j)] = s * aki + c * akj;
                }
                for k in 0..n {
                    let (aik, ajk) = (a[(i, k)], a[(j, k)]);
                    a[(i, k)] = c * aik - s * ajk;
                    a[(j, k)] = s * aik + c * ajk;
                }
                for k in 0..n {
                    let (pki, pkj) = (p[(k, i)], p[(k, j)]);
                    p[(k, i)] = c * pki - s * pkj;
                    p[(k, j)] = s * pki + c * pkj;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::IterationLimit {
            routine: "eig_sym",
            sweeps: MAX_SWEEPS,
        });
    }

    let clamp = 64.0 * f64::EPSILON * n as f64 * scale;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)];
            if v < 0.0 && -v <= clamp {
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].total_cmp(&raw[x]));

    let d: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let mut pm = p.select_columns(&order);
    for j in 0..n {
        let mut best = 0;
        for i in 1..n {
            if pm[(i, j)].abs() > pm[(best, j)].abs() {
                best = i;
            }
        }
        if pm[(best, j)] < 0.0 {
            for i in 0..n {
                pm[(i, j)] = -pm[(i, j)];
            }
        }
    }
    Ok(EigSymResult { p: pm, d })
}
