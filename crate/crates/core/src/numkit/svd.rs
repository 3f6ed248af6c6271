//! One-sided (Hestenes) Jacobi SVD.
//!
//! Column pairs of a working copy are rotated until every pair is orthogonal
//! to working precision; the column norms are then the singular values. The
//! sweep order is fixed (row-cyclic) so results are bit-reproducible.

use crate::error::{Error, Result};

use super::Matrix;

pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Thin SVD `M = U · diag(S) · V` with `V` stored row-wise (`q × n`).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// `U · diag(S) · V`.
    pub fn reconstruct(&self) -> Matrix {
        self.u.scale_columns(&self.s).dot(&self.v)
    }

    /// Best rank-`r` approximation `U[:, :r] · diag(S[:r]) · V[:r, :]`.
    pub fn truncate(&self, r: usize) -> Matrix {
        let r = r.min(self.s.len());
        self.u
            .columns(0, r)
            .scale_columns(&self.s[..r])
            .dot(&self.v.rows_range(0, r))
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    svd_with_sweeps(m, DEFAULT_MAX_SWEEPS)
}

pub fn svd_with_sweeps(m: &Matrix, max_sweeps: usize) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "svd of empty {rows}x{cols} matrix"
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidArgument("svd of non-finite matrix".into()));
    }

    let mut out = if rows >= cols {
        tall_svd(m, max_sweeps)?
    } else {
        // M = (Mᵀ)ᵀ = (U' S V')ᵀ = V'ᵀ S U'ᵀ
        let t = tall_svd(&m.transpose(), max_sweeps)?;
        SvdResult {
            u: t.v.transpose(),
            s: t.s,
            v: t.u.transpose(),
        }
    };
    apply_sign_convention(&mut out);
    Ok(out)
}

/// SVD for `rows >= cols`.
fn tall_svd(m: &Matrix, max_sweeps: usize) -> Result<SvdResult> {
    let (rows, n) = m.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let tol = f64::EPSILON * rows as f64;
    let mut converged = n < 2;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let a = dot(&w[i], &w[i]);
                let b = dot(&w[j], &w[j]);
                let d = dot(&w[i], &w[j]);
                if d == 0.0 || d.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * d);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::IterationLimit {
            routine: "svd",
            sweeps: max_sweeps,
        });
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: ties keep column order
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    // columns at roundoff level carry no reliable direction
    let cutoff = (f64::EPSILON * norms[order[0]]).max(f64::MIN_POSITIVE);
    for (k, &idx) in order.iter().enumerate() {
        let sigma = norms[idx];
        s.push(sigma);
        if sigma > cutoff {
            u_cols.push(w[idx].iter().map(|x| x / sigma).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            degenerate.push(k);
        }
    }
    for k in degenerate {
        u_cols[k] = orthonormal_completion(&u_cols, k, rows);
    }

    let u = Matrix::from_fn(rows, n, |i, j| u_cols[j][i]);
    let vr = Matrix::from_fn(n, n, |i, j| v[order[i]][j]);
    Ok(SvdResult { u, s, v: vr })
}

/// A unit vector orthogonal to every nonzero column in `cols` other than `skip`.
///
/// Projects each standard basis vector off the existing columns and keeps the
/// largest residual; some residual has squared norm at least
/// `(rows − used) / rows`.
fn orthonormal_completion(cols: &[Vec<f64>], skip: usize, rows: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..rows {
        let mut cand: Vec<f64> = (0..rows).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            for (k, c) in cols.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let p = dot(&cand, c);
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if best.as_ref().is_none_or(|(b, _)| norm > *b) {
            best = Some((norm, cand));
        }
    }
    let (norm, cand) = best.expect("rows >= 1");
    cand.into_iter().map(|x| x / norm).collect()
}

/// Each left singular vector's largest-magnitude entry is made non-negative.
fn apply_sign_convention(out: &mut SvdResult) {
    let (rows, q) = out.u.shape();
    let n = out.v.cols();
    for j in 0..q {
        let mut best = 0;
        for i in 1..rows {
            if out.u[(i, j)].abs() > out.u[(best, j)].abs() {
                best = i;
            }
        }
        if out.u[(best, j)] < 0.0 {
            for i in 0..rows {
                out.u[(i, j)] = -out.u[(i, j)];
            }
            for k in 0..n {
                out.v[(j, k)] = -out.v[(j, k)];
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}
