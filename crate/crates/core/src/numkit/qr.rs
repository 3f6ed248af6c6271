use super::Matrix;

/// Thin Householder QR: `M = Q · R` with `Q` (m × q) having orthonormal
/// columns and `R` (q × n) upper-triangular, `q = min(m, n)`.
///
/// `R`'s diagonal is made non-negative by flipping the matching column of `Q`.
/// Rank-deficient input yields zero rows in `R`.
pub fn qr(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = m.shape();
    let q = rows.min(cols);
    let mut a = m.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(q);

    for j in 0..q {
        let x: Vec<f64> = (j..rows).map(|i| a[(i, j)]).collect();
        let tail = x[1..].iter().map(|v| v * v).sum::<f64>();
        if tail == 0.0 {
            // already triangular in this column
            reflectors.push(None);
            continue;
        }
        let norm = (x[0] * x[0] + tail).sqrt();
        let mut v = x;
        v[0] += if v[0] >= 0.0 { norm } else { -norm };
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.iter_mut().for_each(|t| *t /= vnorm);

        for c in j..cols {
            let p: f64 = (j..rows).map(|i| v[i - j] * a[(i, c)]).sum();
            for i in j..rows {
                a[(i, c)] -= 2.0 * p * v[i - j];
            }
        }
        for i in j + 1..rows {
            a[(i, j)] = 0.0;
        }
        reflectors.push(Some(v));
    }

    let mut qm = Matrix::eye(rows, q);
    for (j, v) in reflectors.iter().enumerate().rev() {
        let Some(v) = v else { continue };
        for c in 0..q {
            let p: f64 = (j..rows).map(|i| v[i - j] * qm[(i, c)]).sum();
            for i in j..rows {
                qm[(i, c)] -= 2.0 * p * v[i - j];
            }
        }
    }

    let mut r = Matrix::from_fn(q, cols, |i, c| if c >= i { a[(i, c)] } else { 0.0 });
    for i in 0..q {
        if r[(i, i)] < 0.0 {
            for c in 0..cols {
                r[(i, c)] = -r[(i, c)];
            }
            for k in 0..rows {
                qm[(k, i)] = -qm[(k, i)];
            }
        }
    }
    (qm, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_fixed() {
        let (q, r) = qr(&Matrix::identity(3));
        assert_eq!(q, Matrix::identity(3));
        assert_eq!(r, Matrix::identity(3));
    }

    #[test]
    fn positive_diagonal_is_fixed() {
        let (q, r) = qr(&Matrix::diag(&[2.0, 3.0]));
        assert_eq!(q, Matrix::identity(2));
        assert_eq!(r, Matrix::diag(&[2.0, 3.0]));
    }

    #[test]
    fn rank_one_column_matches_gram_schmidt() {
        // first column [3, 4] has norm 5, direction [0.6, 0.8]
        let (q, r) = qr(&Matrix::from_rows(&[[3.0, 0.0], [4.0, 0.0]]));
        assert!((q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((r[(0, 0)] - 5.0).abs() < 1e-14);
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r.row(1), &[0.0, 0.0]);
        let qtq = q.transpose().dot(&q);
        assert!(qtq.sub(&Matrix::identity(2)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn negative_diagonal_flips_sign() {
        let m = Matrix::diag(&[-2.0, 3.0]);
        let (q, r) = qr(&m);
        assert_eq!(r, Matrix::diag(&[2.0, 3.0]));
        assert_eq!(q.dot(&r), m);
    }

    #[test]
    fn wide_and_tall_shapes() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let (q, r) = qr(&m);
        assert_eq!((q.shape(), r.shape()), ((2, 2), (2, 3)));
        assert!(q.dot(&r).sub(&m).frobenius_norm() < 1e-13);

        let t = m.transpose();
        let (q, r) = qr(&t);
        assert_eq!((q.shape(), r.shape()), ((3, 2), (2, 2)));
        assert!(q.dot(&r).sub(&t).frobenius_norm() < 1e-13);
        assert!(r[(1, 0)] == 0.0 && r[(0, 0)] >= 0.0 && r[(1, 1)] >= 0.0);
    }
}
