use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cntlora::capture::read_dump;
use cntlora::trainlab::RunSummary;
use tempfile::TempDir;

fn write_config(dir: &Path, out: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "model": {"architecture": "mlp2", "dims": [6, 10, 4], "nonlinearity": "tanh",
                  "seed": 3, "source_perturbation": 0.4},
        "data": {"n_train": 64, "n_eval": 32, "noise_std": 0.01, "seed": 4},
        "init": {"method": "cross", "rank": 2, "n_init_samples": 32},
        "train": {"lr": 0.01, "steps": 40, "batch_size": 16, "seed": 5, "loss_threshold": 0.05},
        "output_dir": out
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn cntlora(args: &[&str]) -> Output {
    cntlora_env(args, None)
}

fn cntlora_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cntlora"));
    cmd.args(args).env_remove("CNTLORA_SEED");
    if let Some(s) = seed {
        cmd.env("CNTLORA_SEED", s);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Setup {
    _tmp: TempDir,
    out: PathBuf,
    config: String,
}

fn setup() -> Setup {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    let config = write_config(tmp.path(), &out).display().to_string();
    Setup {
        _tmp: tmp,
        out,
        config,
    }
}

#[test]
fn capture_with_one_sample_has_one_column() {
    let s = setup();
    let o = cntlora(&["capture", "-c", &s.config, "--init.n_init_samples", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let batches = read_dump(s.out.join("activations.cnta")).unwrap();
    assert_eq!(batches.len(), 2);
    assert!(batches.iter().all(|b| b.x.cols() == 1));
}

#[test]
fn capture_is_byte_deterministic() {
    let s = setup();
    let a = s.out.join("a");
    let b = s.out.join("b");
    fs::create_dir(&a).unwrap();
    fs::create_dir(&b).unwrap();
    for d in [&a, &b] {
        let o = cntlora(&[
            "capture",
            "-c",
            &s.config,
            "--output_dir",
            d.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("activations.cnta")).unwrap(),
        fs::read(b.join("activations.cnta")).unwrap()
    );
}

#[test]
fn missing_output_dir_names_the_path() {
    let s = setup();
    let missing = s.out.join("nope");
    let o = cntlora(&[
        "capture",
        "-c",
        &s.config,
        "--output_dir",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains(missing.to_str().unwrap()),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_method_names_the_key() {
    let s = setup();
    let o = cntlora(&["init", "-c", &s.config, "--init.method", "magic"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("init.method"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_with_two() {
    let s = setup();
    let o = cntlora(&[
        "run",
        "-c",
        &s.config,
        "--train.lr",
        "1e200",
        "--set",
        r#"train.optimizer={"kind":"sgd","weight_decay":0}"#,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn staged_pipeline() {
    let s = setup();
    let cfg = s.config.as_str();
    for args in [
        vec!["capture", "-c", cfg],
        vec![
            "init",
            "-c",
            cfg,
            "--activations",
            &format!("{}/activations.cnta", s.out.display()),
        ],
        vec!["allocate", "-c", cfg, "--vas.budget", "3"],
        vec!["train", "-c", cfg],
    ] {
        let o = cntlora(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    }
    for f in [
        "activations.cnta",
        "adapters.cntw",
        "adapters.json",
        "deltas.cntw",
        "allocation.json",
        "trained.cntw",
        "trained.json",
        "metrics.csv",
        "summary.json",
    ] {
        assert!(s.out.join(f).is_file(), "{f}");
    }
    let alloc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.out.join("allocation.json")).unwrap()).unwrap();
    assert_eq!(alloc["budget"], 3);
    let summary = RunSummary::read(s.out.join("summary.json")).unwrap();
    assert_eq!(summary.init_method, "cross");
    let metrics = fs::read_to_string(s.out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,eval_loss\n"));
    assert_eq!(metrics.lines().count(), 1 + 40 + 1);
}

#[test]
fn sweep_then_report() {
    let s = setup();
    let o = cntlora(&[
        "run",
        "-c",
        &s.config,
        "--methods",
        "cross,native",
        "--seeds",
        "1,2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sweep = fs::read_to_string(s.out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    for d in ["cross_seed1", "cross_seed2", "native_seed1", "native_seed2"] {
        assert!(s.out.join(d).join("summary.json").is_file(), "{d}");
    }
    let o = cntlora(&["report", s.out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(
        table.contains("cross") && table.contains("native"),
        "{table}"
    );
    let csv = fs::read_to_string(s.out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn seed_env_overrides_every_seed() {
    let s = setup();
    let o = cntlora_env(&["run", "-c", &s.config], Some("77"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = RunSummary::read(s.out.join("summary.json")).unwrap();
    assert_eq!(summary.seed, 77);
    let with_env = fs::read(s.out.join("activations.cnta")).unwrap();
    let o = cntlora(&["run", "-c", &s.config]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_ne!(fs::read(s.out.join("activations.cnta")).unwrap(), with_env);
    assert_eq!(
        RunSummary::read(s.out.join("summary.json")).unwrap().seed,
        5
    );
}
