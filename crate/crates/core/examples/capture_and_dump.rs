//! Capturing attachment-point activations and round-tripping them through
//! the binary dump.

use cntlora::capture::{build_toy_model, decode_dump, encode_dump, read_dump, write_dump};
use cntlora::cli::{capture_activations, ExperimentConfig};

fn main() -> cntlora::Result<()> {
    let cfg = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "mlp2", "dims": [8, 12, 4], "nonlinearity": "relu",
                  "seed": 1, "source_perturbation": 0.2},
        "data": {"n_train": 64, "n_eval": 32, "noise_std": 0.01, "seed": 1},
        "init": {"method": "cross", "n_init_samples": 10, "n_init_batches": 2},
        "train": {"lr": 0.001, "steps": 1, "batch_size": 8, "seed": 1, "loss_threshold": 0.0},
        "output_dir": "."
    }))?;
    let model = build_toy_model(&cfg.model)?;
    let batches = capture_activations(&model, &cfg)?;
    for b in &batches {
        println!(
            "{} batch {}: {}x{}",
            b.point_id,
            b.batch_index,
            b.x.rows(),
            b.x.cols()
        );
    }

    let bytes = encode_dump(&batches)?;
    println!(
        "encoded {} bytes, magic {:?}",
        bytes.len(),
        std::str::from_utf8(&bytes[..4]).unwrap()
    );
    assert_eq!(decode_dump(&bytes)?, batches);

    let path = std::env::temp_dir().join(format!("cntlora-example-{}.cnta", std::process::id()));
    write_dump(&path, &batches)?;
    let back = read_dump(&path)?;
    std::fs::remove_file(&path).ok();
    println!("file round trip exact: {}", back == batches);
    Ok(())
}
