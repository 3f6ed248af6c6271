//! The dense kernels everything else is built on.

use cntlora::numkit::{eig_sym, pinv, qr, spectral_norm, svd, DEFAULT_RCOND};
use cntlora::Matrix;

fn main() -> cntlora::Result<()> {
    let m = Matrix::from_rows(&[
        [3.0, 1.0, 0.5],
        [1.0, 2.0, -1.0],
        [0.0, 4.0, 1.0],
        [2.0, 0.0, 1.0],
    ]);

    let f = svd(&m)?;
    println!("singular values: {:?}", f.s);
    println!(
        "‖M − UΣV‖_F = {:.2e}",
        f.reconstruct().sub(&m).frobenius_norm()
    );
    println!("‖M‖_2 = {:.6}", spectral_norm(&m)?);

    let (q, r) = qr(&m);
    println!("QR residual = {:.2e}", q.dot(&r).sub(&m).frobenius_norm());
    println!(
        "R diagonal: {:?}",
        (0..3).map(|i| r[(i, i)]).collect::<Vec<_>>()
    );

    let g = m.transpose().gram();
    let e = eig_sym(&g)?;
    println!("eigenvalues of M·Mᵀ (4x4, rank 3): {:?}", e.d);

    // Moore–Penrose conditions on a rank-deficient matrix
    let p = pinv(&g, DEFAULT_RCOND)?;
    let c1 = g.dot(&p).dot(&g).sub(&g).frobenius_norm();
    let c2 = p.dot(&g).dot(&p).sub(&p).frobenius_norm();
    println!("A·A†·A − A = {c1:.2e}, A†·A·A† − A† = {c2:.2e}");
    Ok(())
}
