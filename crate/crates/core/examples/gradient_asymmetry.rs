//! At step zero a zero up-matrix gives the down-matrix no gradient; a
//! data-driven start does. Backprop is checked against finite differences.

use cntlora::capture::{build_toy_model, gaussian};
use cntlora::cli::{capture_activations, initialize, ExperimentConfig};
use cntlora::trainlab::{gradcheck, loss_and_grad, LoraNet, LossKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cntlora::Result<()> {
    let mut cfg = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "mlp2", "dims": [10, 12, 6], "nonlinearity": "tanh",
                  "seed": 2, "source_perturbation": 0.3},
        "data": {"n_train": 64, "n_eval": 32, "noise_std": 0.01, "seed": 2},
        "init": {"method": "native", "rank": 3, "n_init_samples": 32},
        "train": {"lr": 0.001, "steps": 1, "batch_size": 16, "seed": 2, "loss_threshold": 0.0},
        "output_dir": "."
    }))?;
    let model = build_toy_model(&cfg.model)?;
    let batches = capture_activations(&model, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = gaussian(&mut rng, 10, 16, 1.0);
    let t = model.teacher_forward(&x)?;

    for method in ["native", "cross", "self", "shift"] {
        cfg.init.method = method.into();
        let init = initialize(&model, &batches, &cfg)?;
        let net = LoraNet::new(&model, &init.adapters)?;
        let trace = net.forward(&x)?;
        let (_, d_out) = loss_and_grad(trace.output(), &t, LossKind::Mse)?;
        let grads = net.backward(&trace, &d_out)?;
        let da: Vec<String> = grads
            .iter()
            .flatten()
            .map(|g| format!("{:.3e}", g.d_a.frobenius_norm()))
            .collect();
        let check = gradcheck(&net, &x, &t, LossKind::Mse, 1e-5)?;
        println!(
            "{method:>6}: ‖dA‖ per layer [{}], finite-difference rel err {:.1e}",
            da.join(", "),
            check.max_rel_error
        );
    }
    Ok(())
}
