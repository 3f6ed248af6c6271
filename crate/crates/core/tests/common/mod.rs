#![allow(dead_code)]

use cntlora::Matrix;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `rows × cols` with rank at most `rank`.
pub fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    randn(rng, rows, rank).dot(&randn(rng, rank, cols))
}

/// Best rank-`r` approximation from nalgebra's SVD.
pub fn truncation(m: &Matrix, r: usize) -> Matrix {
    let svd = to_na(m).svd(true, true);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DMatrix::zeros(m.rows(), m.cols());
    for &i in idx.iter().take(r) {
        out += svd.singular_values[i] * u.column(i) * vt.row(i);
    }
    from_na(&out)
}

/// Orthogonal projector onto the column space of `m`, numerical rank by a
/// relative singular-value cutoff.
pub fn column_projector(m: &Matrix, rel_cut: f64) -> Matrix {
    let svd = to_na(m).svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.unwrap();
    let mut p = DMatrix::zeros(m.rows(), m.rows());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > rel_cut * smax {
            p += u.column(i) * u.column(i).transpose();
        }
    }
    from_na(&p)
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}
