//! Splitting a weight update into LoRA factors: the product is fixed, only
//! the balance between `B` and `A` moves with `p`.

use cntlora::capture::gaussian;
use cntlora::initcore::{decompose_qr, decompose_svd};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cntlora::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let delta = gaussian(&mut rng, 12, 10, 1.0);
    let (rank, alpha) = (3, 6.0);

    let reference = decompose_svd(&delta, rank, 0.5, alpha)?.effective_delta();
    println!(
        "{:>5} {:>10} {:>10} {:>12}",
        "p", "‖B‖_F", "‖A‖_F", "Δ vs p=0.5"
    );
    for p in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
        let ad = decompose_svd(&delta, rank, p, alpha)?;
        let drift = ad.effective_delta().sub(&reference).frobenius_norm();
        println!(
            "{p:>5} {:>10.4} {:>10.4} {drift:>12.2e}",
            ad.b.frobenius_norm(),
            ad.a.frobenius_norm()
        );
    }

    let q = decompose_qr(&delta, rank, alpha)?;
    let qtq = q.b.transpose().dot(&q.b);
    println!(
        "QR split: B has orthonormal columns (‖BᵀB − I‖ = {:.2e})",
        qtq.sub(&cntlora::Matrix::identity(rank)).frobenius_norm()
    );
    Ok(())
}
