//! Zero-initialized LoRA against the cross-mode start on the linear teacher
//! task. The threshold is set just above the best loss any rank-r update
//! can reach, so "steps to threshold" measures how fast each start gets
//! close to optimal.
//!
//! `cargo run --release --example convergence_race -- 5` runs five seeds.

use cntlora::capture::build_toy_model;
use cntlora::cli::{run_in_memory, ExperimentConfig};
use cntlora::trainlab::best_rank_r_loss;

fn main() -> cntlora::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let base = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "linear", "dims": [32, 32], "seed": 0, "source_perturbation": 0.3},
        "data": {"n_train": 1024, "n_eval": 512, "noise_std": 0.01, "seed": 0},
        "init": {"method": "native", "rank": 4, "alpha": 8.0, "n_init_samples": 128},
        "train": {"lr": 1e-3, "steps": 2000, "batch_size": 64, "seed": 0, "loss_threshold": 0.0},
        "output_dir": "."
    }))?;

    println!(
        "{:>4} {:>8} {:>7} {:>7} {:>10} {:>10}",
        "seed", "tau", "native", "cross", "native_end", "cross_end"
    );
    for seed in 0..seeds {
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let model = build_toy_model(&cfg.model)?;
        cfg.train.loss_threshold =
            1.05 * best_rank_r_loss(&model, cfg.init.rank, cfg.data.noise_std)?;
        let mut row = Vec::new();
        for method in ["native", "cross"] {
            cfg.init.method = method.into();
            row.push(run_in_memory(&cfg)?.summary);
        }
        let steps = |i: usize| {
            row[i]
                .steps_to_threshold
                .map_or("-".into(), |s| s.to_string())
        };
        println!(
            "{seed:>4} {:>8.4} {:>7} {:>7} {:>10.4} {:>10.4}",
            cfg.train.loss_threshold,
            steps(0),
            steps(1),
            row[0].final_eval_loss,
            row[1].final_eval_loss
        );
    }
    Ok(())
}
