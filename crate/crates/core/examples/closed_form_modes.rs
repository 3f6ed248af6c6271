//! Target-weight estimates from one batch of target activations, and the
//! identity each one satisfies.

use cntlora::capture::gaussian;
use cntlora::initcore::{estimate_cross, estimate_self, estimate_shift};
use cntlora::numkit::DEFAULT_RCOND;
use cntlora::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
}

fn main() -> cntlora::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = gaussian(&mut rng, 6, 8, 0.4);
    let x = gaussian(&mut rng, 8, 20, 1.0);
    let cov = x.gram();

    let cross = estimate_cross(&w, &x, DEFAULT_RCOND)?;
    println!(
        "cross: ‖W_tar·XXᵀ − W_src‖ / ‖W_src‖ = {:.2e}",
        rel(&cross.dot(&cov), &w)
    );

    let selfm = estimate_self(&w, &x, DEFAULT_RCOND)?;
    let lhs = selfm.dot(&cov).dot(&selfm.transpose());
    println!(
        "self:  W_tar·XXᵀ·W_tarᵀ vs W_src·W_srcᵀ rel err = {:.2e}",
        rel(&lhs, &w.gram())
    );

    let c = Matrix::identity(6).scale(0.5);
    let shift = estimate_shift(&w, &x, &c, DEFAULT_RCOND)?;
    let m = w.transpose().sub(&cov.dot(&w.transpose()));
    println!(
        "shift: W_tar·(W_srcᵀ − XXᵀW_srcᵀ) vs C rel err = {:.2e}",
        rel(&shift.dot(&m), &c)
    );

    for (name, est) in [("cross", &cross), ("self", &selfm), ("shift", &shift)] {
        println!("{name:>5}: ‖ΔW‖_F = {:.4}", est.sub(&w).frobenius_norm());
    }
    Ok(())
}
