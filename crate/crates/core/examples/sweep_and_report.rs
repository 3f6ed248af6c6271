//! The experiment driver used as a library: a method × seed sweep written to
//! disk, then summarized. Same as
//! `cntlora run -c cfg.json --methods native,cross,pissa --seeds 1,2`
//! followed by `cntlora report <dir>`.

use cntlora::cli::{cmd_report, cmd_run, ExperimentConfig};

fn main() -> cntlora::Result<()> {
    let dir = std::env::temp_dir().join(format!("cntlora-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let mut cfg = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "mlp2", "dims": [12, 16, 6], "nonlinearity": "tanh",
                  "seed": 0, "source_perturbation": 0.3},
        "data": {"n_train": 256, "n_eval": 128, "noise_std": 0.01, "seed": 0},
        "init": {"method": "cross", "rank": 2, "n_init_samples": 64},
        "train": {"lr": 3e-3, "steps": 300, "batch_size": 32, "seed": 0,
                  "loss_threshold": 0.2, "eval_every": 50},
        "output_dir": "."
    }))?;
    cfg.output_dir = dir.clone();

    let methods: Vec<String> = ["native", "cross", "shift", "pissa"]
        .map(String::from)
        .to_vec();
    cmd_run(&cfg, &methods, &[1, 2])?;
    println!();
    cmd_report(std::slice::from_ref(&dir), None)?;
    println!("\noutputs in {}", dir.display());
    Ok(())
}
