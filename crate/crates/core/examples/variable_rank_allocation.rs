//! Spreading a global rank budget over attachment points by relative
//! singular-value variance.

use cntlora::capture::build_toy_model;
use cntlora::cli::{allocate, capture_activations, estimate_deltas, ExperimentConfig};
use cntlora::vas::{allocate_ranks, default_budget, relative_variance, SingularProfile};

fn main() -> cntlora::Result<()> {
    let hand = [
        SingularProfile::new("P1", vec![3.0, 1.0])?,
        SingularProfile::new("P2", vec![2.0, 2.0])?,
    ];
    for p in &hand {
        println!(
            "{}: relative variance {:?}",
            p.point_id,
            relative_variance(&p.s)
        );
    }
    for k in 1..=4 {
        println!("K = {k}: {:?}", allocate_ranks(&hand, k, 0)?.ranks);
    }

    let cfg = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "mlp2", "dims": [16, 24, 8], "nonlinearity": "tanh",
                  "seed": 5, "source_perturbation": 0.3},
        "data": {"n_train": 256, "n_eval": 128, "noise_std": 0.01, "seed": 5},
        "init": {"method": "shift", "rank": 4, "n_init_samples": 64},
        "train": {"lr": 0.001, "steps": 1, "batch_size": 32, "seed": 5, "loss_threshold": 0.0},
        "output_dir": "."
    }))?;
    let model = build_toy_model(&cfg.model)?;
    let batches = capture_activations(&model, &cfg)?;
    let deltas = estimate_deltas(&model, &batches, &cfg.init)?;
    let k = default_budget(cfg.init.rank, deltas.len());
    let a = allocate(&deltas, k, 1)?;
    println!("mlp2 shift deltas, K = {k}: {}", a.to_json());
    Ok(())
}
