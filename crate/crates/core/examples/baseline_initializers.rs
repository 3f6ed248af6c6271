//! Competing initializers side by side on one layer.

use cntlora::capture::gaussian;
use cntlora::initcore::{
    init_baseline, init_cntlora, BaselineKind, ConstraintMode, EstimatorConfig, ShiftMatrix,
};
use cntlora::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cntlora::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = gaussian(&mut rng, 10, 16, 0.3);
    let x = gaussian(&mut rng, 16, 48, 1.0);
    let (rank, alpha) = (4, 8.0);
    let batches = [x];

    println!(
        "{:<7} {:>10} {:>10} {:>10}",
        "method", "‖B‖_F", "‖A‖_F", "‖ΔW‖_F"
    );
    for kind in [
        BaselineKind::NativeLora,
        BaselineKind::Pissa,
        BaselineKind::Olora,
        BaselineKind::Eva,
        BaselineKind::Corda,
    ] {
        let ad = init_baseline(kind, &w, Some(&batches[..]), rank, alpha, 0)?;
        println!(
            "{:<7} {:>10.4} {:>10.4} {:>10.4}",
            kind.name(),
            ad.b.frobenius_norm(),
            ad.a.frobenius_norm(),
            ad.effective_delta().frobenius_norm()
        );
        if kind == BaselineKind::Eva {
            let g = ad.a.dot(&ad.a.transpose()).sub(&Matrix::identity(rank));
            println!(
                "        EVA rows orthonormal: ‖AAᵀ − I‖ = {:.2e}",
                g.frobenius_norm()
            );
        }
    }
    for mode in [
        ConstraintMode::Cross,
        ConstraintMode::SelfMode,
        ConstraintMode::Shift(ShiftMatrix::Scaled(1.0)),
    ] {
        let name = mode.name();
        let out = init_cntlora(&w, &batches, &EstimatorConfig::new(mode), rank, alpha)?;
        println!(
            "{:<7} {:>10.4} {:>10.4} {:>10.4}",
            name,
            out.adapter.b.frobenius_norm(),
            out.adapter.a.frobenius_norm(),
            out.adapter.effective_delta().frobenius_norm()
        );
    }
    Ok(())
}
