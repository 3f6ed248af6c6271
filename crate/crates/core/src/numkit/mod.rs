//! Dense linear-algebra kernels used by the initializers.
//!
//! Everything runs in `f64`. All routines are pure functions of their inputs
//! with a fixed iteration order, so identical input bits give identical
//! output bits.

mod eig;
mod matrix;
mod qr;
mod svd;

pub use eig::{eig_sym, EigSymResult};
pub use matrix::Matrix;
pub use qr::qr;
pub use svd::{svd, svd_with_sweeps, SvdResult, DEFAULT_MAX_SWEEPS};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_RCOND: f64 = 1e-12;

/// Moore–Penrose pseudo-inverse.
///
/// Singular values `σ ≤ rcond · σ_max` are treated as zero.
pub fn pinv(m: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rcond must lie in (0, 1), got {rcond}"
        )));
    }
    let f = svd(m)?;
    let smax = f.s.first().copied().unwrap_or(0.0);
    let cutoff = rcond * smax;
    let inv: Vec<f64> =
        f.s.iter()
            .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
            .collect();
    // M† = Vᵀ · diag(1/σ) · Uᵀ
    Ok(f.v.transpose().scale_columns(&inv).dot(&f.u.transpose()))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.s.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_invertible_diagonal() {
        let p = pinv(&Matrix::diag(&[2.0, 4.0]), DEFAULT_RCOND).unwrap();
        assert_eq!(p, Matrix::diag(&[0.5, 0.25]));
    }

    #[test]
    fn pinv_keeps_zero_directions_zero() {
        let p = pinv(&Matrix::diag(&[1.0, 0.0]), DEFAULT_RCOND).unwrap();
        assert_eq!(p, Matrix::diag(&[1.0, 0.0]));
    }

    #[test]
    fn pinv_of_rank_one_matches_closed_form() {
        // rank one: M† = Mᵀ / ‖M‖_F²
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        let oracle = m.transpose().scale(1.0 / m.frobenius_norm().powi(2));
        let p = pinv(&m, DEFAULT_RCOND).unwrap();
        assert!(p.sub(&oracle).frobenius_norm() < 1e-14);
        assert!((oracle[(0, 1)] - 2.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn pinv_rejects_bad_rcond() {
        assert!(pinv(&Matrix::identity(2), 0.0).is_err());
        assert!(pinv(&Matrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn pinv_of_zero_is_zero_transpose_shape() {
        let p = pinv(&Matrix::zeros(2, 3), DEFAULT_RCOND).unwrap();
        assert_eq!(p, Matrix::zeros(3, 2));
    }
}
