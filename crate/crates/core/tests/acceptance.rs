//! Acceptance gate. Every criterion prints one PASS/FAIL line; the target
//! exits non-zero if any criterion fails. Criteria run sequentially so the
//! runtime budgets measure one criterion at a time.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use cntlora::capture::{
    build_toy_model, decode_dump, encode_dump, read_weights, write_weights, ActivationBatch,
};
use cntlora::cli::{
    capture_activations, cmd_run, initialize, run_in_memory, sample_dataset, ExperimentConfig,
};
use cntlora::initcore::{
    decompose_svd, estimate_cross, estimate_self, estimate_shift, init_baseline, random_like,
    read_adapters, write_adapters, BaselineKind,
};
use cntlora::numkit::DEFAULT_RCOND;
use cntlora::trainlab::{gradcheck, loss_and_grad, train, LoraNet, LossKind};
use cntlora::vas::{allocate_ranks, SingularProfile};
use cntlora::Matrix;
use common::{column_projector, low_rank, randn, rel_err, to_na, truncation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-8;
const DECOMP_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;
const BASELINE_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-5;
/// Threshold for steps-to-threshold: this factor times the lowest expected
/// loss any rank-r update can reach on the task.
const TAU_FACTOR: f64 = 1.05;
const FINAL_LOSS_SLACK: f64 = 1.05;
const CLOSED_FORM_BUDGET: Duration = Duration::from_secs(10);
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(120);

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{tag}] {name}: {}", o.detail);
}

/// Random activations: full rank, wide, or built from a low-rank product.
fn random_activations(rng: &mut ChaCha8Rng, d: usize, case: usize) -> Matrix {
    match case % 3 {
        0 => {
            let b = rng.random_range(d..=d + 16);
            randn(rng, d, b)
        }
        1 => {
            let b = rng.random_range(1..=d);
            randn(rng, d, b)
        }
        _ => {
            let b = rng.random_range(1..=40);
            let r = rng.random_range(1..=d.min(b));
            low_rank(rng, d, b, r)
        }
    }
}

fn numerical_rank(m: &Matrix) -> usize {
    let s = to_na(m).singular_values();
    let smax = s.max();
    s.iter().filter(|v| **v > 1e-6 * smax).count()
}

fn closed_form() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_cross, mut worst_self, mut worst_shift) = (0.0f64, 0.0f64, 0.0f64);
    let mut deficient = 0;
    let mut failures = Vec::new();
    for case in 0..200 {
        let k = rng.random_range(1..=32);
        let d = rng.random_range(1..=32);
        let w = randn(&mut rng, k, d);
        let x = random_activations(&mut rng, d, case);
        let cov = x.gram();
        let rank = numerical_rank(&x);
        if rank < d {
            deficient += 1;
        }

        // cross: W_tar·XXᵀ is W_src projected onto range(XXᵀ)
        let wt = estimate_cross(&w, &x, DEFAULT_RCOND).unwrap();
        let e = rel_err(&wt.dot(&cov), &w.dot(&column_projector(&x, 1e-6)));
        worst_cross = worst_cross.max(e);

        // self: covariance identity when XXᵀ is full rank
        let ws = estimate_self(&w, &x, DEFAULT_RCOND).unwrap();
        if !ws.is_finite() {
            failures.push(format!("self case {case} not finite"));
        }
        if rank == d {
            let e = rel_err(&ws.dot(&cov).dot(&ws.transpose()), &w.gram());
            worst_self = worst_self.max(e);
        }

        // shift: W_tar·M = C·M†M, which is C itself when M has full column rank
        let c = randn(&mut rng, k, k);
        let wh = estimate_shift(&w, &x, &c, DEFAULT_RCOND).unwrap();
        let m = w.transpose().sub(&cov.dot(&w.transpose()));
        let row_proj = column_projector(&m.transpose(), 1e-12);
        let e = rel_err(&wh.dot(&m), &c.dot(&row_proj));
        worst_shift = worst_shift.max(e);
    }
    let elapsed = start.elapsed();
    let pass = worst_cross <= IDENTITY_TOL
        && worst_self <= IDENTITY_TOL
        && worst_shift <= IDENTITY_TOL
        && failures.is_empty()
        && elapsed < CLOSED_FORM_BUDGET;
    Outcome {
        pass,
        detail: format!(
            "max rel err cross {worst_cross:.1e} self {worst_self:.1e} shift {worst_shift:.1e} \
             (tol {IDENTITY_TOL:.0e}, {deficient}/200 rank-deficient X) in {:.2}s{}",
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" {failures:?}")
            }
        ),
    }
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_trunc = 0.0f64;
    let mut worst_p = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=32);
        let d = rng.random_range(1..=32);
        let delta = randn(&mut rng, k, d);
        let r = rng.random_range(1..=k.min(d));
        let alpha = rng.random_range(0.5..32.0);
        let oracle = truncation(&delta, r);
        let base = decompose_svd(&delta, r, 0.5, alpha)
            .unwrap()
            .effective_delta();
        for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let got = decompose_svd(&delta, r, p, alpha)
                .unwrap()
                .effective_delta();
            worst_trunc = worst_trunc.max(got.sub(&oracle).max_abs());
            worst_p = worst_p.max(got.sub(&base).max_abs());
        }
    }
    Outcome {
        pass: worst_trunc <= DECOMP_TOL && worst_p <= DECOMP_TOL,
        detail: format!(
            "max |(α/r)BA − trunc_r(ΔW)| {worst_trunc:.1e}, max drift across p {worst_p:.1e} (tol {DECOMP_TOL:.0e})"
        ),
    }
}

fn vas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum_ok = 0;
    let mut scale_ok = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let profiles: Vec<SingularProfile> = (0..n)
            .map(|i| {
                let len = rng.random_range(1..=8);
                let mut s: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..5.0)).collect();
                s.sort_by(|a, b| b.total_cmp(a));
                SingularProfile::new(format!("p{i}"), s).unwrap()
            })
            .collect();
        let capacity: usize = profiles.iter().map(|p| p.max_rank()).sum();
        let budget = rng.random_range(0..=capacity);
        let a = allocate_ranks(&profiles, budget, 0).unwrap();
        if a.total() == budget {
            sum_ok += 1;
        }
        let mut scaled = profiles.clone();
        let j = rng.random_range(0..n);
        let c = 2f64.powi(rng.random_range(-8..=8));
        scaled[j].s.iter_mut().for_each(|v| *v *= c);
        if allocate_ranks(&scaled, budget, 0).unwrap() == a {
            scale_ok += 1;
        }
    }

    let hand = allocate_ranks(
        &[
            SingularProfile::new("P1", vec![3.0, 1.0]).unwrap(),
            SingularProfile::new("P2", vec![2.0, 2.0]).unwrap(),
        ],
        2,
        0,
    )
    .unwrap();
    let hand_ok = hand.rank_of("P1") == Some(1) && hand.rank_of("P2") == Some(1);

    let mut cfg = small_config("shift");
    cfg.model.architecture = cntlora::capture::Architecture::Mlp2;
    cfg.model.dims = vec![12, 16, 8];
    cfg.vas.enabled = true;
    cfg.vas.budget = None;
    let model = build_toy_model(&cfg.model).unwrap();
    let batches = capture_activations(&model, &cfg).unwrap();
    let init = initialize(&model, &batches, &cfg).unwrap();
    let alloc = init.allocation.unwrap();
    let default_ok = alloc.budget == cfg.init.rank * 2 && alloc.total() == cfg.init.rank * 2;

    Outcome {
        pass: sum_ok == 100 && scale_ok == 100 && hand_ok && default_ok,
        detail: format!(
            "sum = K {sum_ok}/100, scale invariance {scale_ok}/100, hand example {:?}, default K = rank x points -> {} ({})",
            hand.ranks,
            alloc.budget,
            alloc.to_json()
        ),
    }
}

fn small_config(method: &str) -> ExperimentConfig {
    ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "linear", "dims": [12, 8], "nonlinearity": "tanh",
                  "seed": 4, "source_perturbation": 0.3},
        "data": {"n_train": 128, "n_eval": 64, "noise_std": 0.01, "seed": 4},
        "init": {"method": method, "rank": 3, "n_init_samples": 48},
        "train": {"lr": 0.003, "steps": 60, "batch_size": 32, "seed": 4,
                  "loss_threshold": 0.5, "eval_every": 20},
        "output_dir": "."
    }))
    .unwrap()
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut cfg = small_config("pissa");
        cfg.set_seed(seed);
        if seed % 2 == 1 {
            cfg.model.architecture = cntlora::capture::Architecture::Mlp2;
            cfg.model.dims = vec![
                rng.random_range(2..8),
                rng.random_range(3..9),
                rng.random_range(2..6),
            ];
        } else {
            cfg.model.dims = vec![rng.random_range(2..10), rng.random_range(2..10)];
        }
        cfg.init.rank = 1 + (seed as usize % 2);
        let model = build_toy_model(&cfg.model).unwrap();
        // random factors so neither B nor A is degenerate
        let adapters: Vec<_> = model
            .points()
            .iter()
            .map(|p| {
                let r = cfg.init.rank.min(p.in_dim).min(p.out_dim);
                let b = randn(&mut rng, p.out_dim, r).scale(0.5);
                let a = randn(&mut rng, r, p.in_dim).scale(0.5);
                (
                    p.id.clone(),
                    cntlora::initcore::AdapterInit::new(b, a, 2.0, 0.5).unwrap(),
                )
            })
            .collect();
        let net = LoraNet::new(&model, &adapters).unwrap();
        let n = rng.random_range(1..6);
        let x = randn(&mut rng, model.input_dim(), n);
        let t = randn(&mut rng, model.output_dim(), n);
        let kind = if seed % 3 == 0 {
            LossKind::CrossEntropy
        } else {
            LossKind::Mse
        };
        worst = worst.max(
            gradcheck(&net, &x, &t, kind, FD_STEP)
                .unwrap()
                .max_rel_error,
        );
    }

    // step-zero asymmetry on the linear teacher task
    let mut da = Vec::new();
    for method in ["native", "cross", "self", "shift"] {
        let cfg = small_config(method);
        let model = build_toy_model(&cfg.model).unwrap();
        let batches = capture_activations(&model, &cfg).unwrap();
        let init = initialize(&model, &batches, &cfg).unwrap();
        let data = sample_dataset(&model, &cfg.data);
        let net = LoraNet::new(&model, &init.adapters).unwrap();
        let trace = net.forward(&data.train.inputs).unwrap();
        let (_, g) = loss_and_grad(trace.output(), &data.train.targets, LossKind::Mse).unwrap();
        let grads = net.backward(&trace, &g).unwrap();
        let norm: f64 = grads.iter().flatten().map(|g| g.d_a.frobenius_norm()).sum();
        da.push((method, norm));
    }
    let asym = da[0].1 == 0.0 && da[1..].iter().all(|(_, n)| *n > 0.0);
    Outcome {
        pass: worst <= GRAD_TOL && asym,
        detail: format!(
            "max finite-difference rel err {worst:.1e} over 50 seeds (tol {GRAD_TOL:.0e}); step-0 ‖dA‖ {}",
            da.iter().map(|(m, n)| format!("{m}={n:.3e}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn race_config(seed: u64, method: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_value(serde_json::json!({
        "model": {"architecture": "linear", "dims": [32, 32], "seed": 0, "source_perturbation": 0.3},
        "data": {"n_train": 1024, "n_eval": 512, "noise_std": 0.01, "seed": 0},
        "init": {"method": method, "rank": 4, "alpha": 8.0, "n_init_samples": 128},
        "train": {"optimizer": {"kind": "adamw", "weight_decay": 0.0}, "lr": 1e-3, "steps": 2000,
                  "batch_size": 64, "seed": 0, "loss_threshold": 0.0},
        "output_dir": "."
    }))
    .unwrap();
    cfg.set_seed(seed);
    cfg
}

/// Best reachable rank-r expected loss, from nalgebra's singular values of the
/// teacher gap.
fn rank_r_floor(cfg: &ExperimentConfig) -> f64 {
    let model = build_toy_model(&cfg.model).unwrap();
    let gap = model.teacher()[0].sub(&model.points()[0].w_src);
    let mut s: Vec<f64> = to_na(&gap).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let tail: f64 = s.iter().skip(cfg.init.rank).map(|v| v * v).sum();
    tail / gap.rows() as f64 + cfg.data.noise_std.powi(2)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct RaceRow {
    native_steps: f64,
    cross_steps: f64,
    native_final: f64,
    cross_final: f64,
    cross_cos: f64,
    cross_spectral: f64,
    ctrl_cos: f64,
    ctrl_spectral: f64,
}

fn race() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut cross_runs = Vec::new();
    let mut full_length = true;
    for seed in 0..10u64 {
        let tau = TAU_FACTOR * rank_r_floor(&race_config(seed, "native"));
        let mut out = Vec::new();
        for method in ["native", "cross"] {
            let mut cfg = race_config(seed, method);
            cfg.train.loss_threshold = tau;
            let run = run_in_memory(&cfg).unwrap();
            full_length &= run.trained.metrics.loss_curve.len() == cfg.train.steps;
            out.push(run);
        }
        let steps = |i: usize| {
            out[i]
                .summary
                .steps_to_threshold
                .map_or(f64::INFINITY, |s| s as f64)
        };
        rows.push((
            steps(0),
            steps(1),
            out[0].summary.final_eval_loss,
            out[1].summary.final_eval_loss,
        ));
        cross_runs.push((seed, tau, out.pop().unwrap()));
    }
    let race_time = start.elapsed();

    let mut full = Vec::new();
    for ((seed, tau, cross), (ns, cs, nf, cf)) in cross_runs.into_iter().zip(rows) {
        let mut cfg = race_config(seed, "cross");
        cfg.train.loss_threshold = tau;
        let init = &cross.init.adapters[0].1;
        let ctrl = random_like(init, seed + 10_000).unwrap();
        let data = sample_dataset(&cross.model, &cfg.data);
        let ctrl_run = train(&cross.model, &[("layer0".into(), ctrl)], &cfg.train, &data).unwrap();
        let m = ctrl_run.metrics.layers[0].metrics;
        full.push(RaceRow {
            native_steps: ns,
            cross_steps: cs,
            native_final: nf,
            cross_final: cf,
            cross_cos: cross.summary.cosine.unwrap_or(f64::NAN),
            cross_spectral: cross.summary.spectral,
            ctrl_cos: m.cosine.unwrap_or(f64::NAN),
            ctrl_spectral: m.spectral,
        });
    }

    let col = |f: fn(&RaceRow) -> f64| full.iter().map(f).collect::<Vec<f64>>();
    let med_native = median(&mut col(|r| r.native_steps));
    let med_cross = median(&mut col(|r| r.cross_steps));
    let fin_native = median(&mut col(|r| r.native_final));
    let fin_cross = median(&mut col(|r| r.cross_final));
    let c5 = Outcome {
        pass: full_length
            && med_cross < med_native
            && fin_cross <= fin_native * FINAL_LOSS_SLACK
            && race_time < CONVERGENCE_BUDGET,
        detail: format!(
            "median steps to {TAU_FACTOR}x rank-r floor: cross {med_cross} vs native {med_native}; \
             median final eval loss cross {fin_cross:.4} vs native {fin_native:.4} (x{FINAL_LOSS_SLACK}); \
             {:.1}s for 20 runs",
            race_time.as_secs_f64()
        ),
    };

    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let (cc, rc) = (mean(col(|r| r.cross_cos)), mean(col(|r| r.ctrl_cos)));
    let (cs, rs) = (
        mean(col(|r| r.cross_spectral)),
        mean(col(|r| r.ctrl_spectral)),
    );
    let c6 = Outcome {
        pass: cc > rc && cs < rs,
        detail: format!(
            "mean init/final cosine cross {cc:.3} vs random control {rc:.3}; mean spectral gap {cs:.3} vs {rs:.3}"
        ),
    };
    (c5, c6)
}

fn baselines() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let none: Option<&[Matrix]> = None;
    let (mut native_ok, mut pissa, mut olora, mut eva) = (true, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..50u64 {
        let k = rng.random_range(1..=24);
        let d = rng.random_range(1..=24);
        let w = randn(&mut rng, k, d);
        let r = rng.random_range(1..=k.min(d));
        let alpha = rng.random_range(1.0..16.0);

        let n = init_baseline(BaselineKind::NativeLora, &w, none, r, alpha, i).unwrap();
        native_ok &= n.effective_delta().as_slice().iter().all(|v| *v == 0.0);

        let p = init_baseline(BaselineKind::Pissa, &w, none, r, alpha, i).unwrap();
        pissa = pissa.max(p.effective_delta().sub(&truncation(&w, r)).max_abs());

        let o = init_baseline(BaselineKind::Olora, &w, none, r, alpha, i).unwrap();
        let qr = to_na(&w).qr();
        let (q, rr) = (qr.q(), qr.r());
        let oracle = q.columns(0, r) * rr.rows(0, r);
        olora = olora.max(o.effective_delta().sub(&common::from_na(&oracle)).max_abs());

        let b = rng.random_range(d..d + 20);
        let x = randn(&mut rng, d, b);
        let e = init_baseline(BaselineKind::Eva, &w, Some(&[x][..]), r, alpha, i).unwrap();
        eva = eva.max(
            e.a.dot(&e.a.transpose())
                .sub(&Matrix::identity(r))
                .max_abs(),
        );
    }
    Outcome {
        pass: native_ok && pissa <= BASELINE_TOL && olora <= BASELINE_TOL && eva <= BASELINE_TOL,
        detail: format!(
            "native delta exactly 0: {native_ok}; PiSSA vs SVD truncation {pissa:.1e}; OLoRA vs QR {olora:.1e}; EVA ‖AAᵀ − I‖max {eva:.1e} (tol {BASELINE_TOL:.0e})"
        ),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn round_trip() -> Outcome {
    let mut cfg = small_config("cross");
    cfg.model.architecture = cntlora::capture::Architecture::Mlp2;
    cfg.model.dims = vec![10, 12, 6];
    cfg.init.n_init_batches = 3;
    let model = build_toy_model(&cfg.model).unwrap();
    let batches: Vec<ActivationBatch> = capture_activations(&model, &cfg).unwrap();
    let bytes = encode_dump(&batches).unwrap();
    let decoded = decode_dump(&bytes).unwrap();
    let dump_ok = decoded == batches && encode_dump(&decoded).unwrap() == bytes;

    let tmp = tempfile::tempdir().unwrap();
    let init = initialize(&model, &batches, &cfg).unwrap();
    let (wp, mp) = (tmp.path().join("a.cntw"), tmp.path().join("a.json"));
    write_adapters(&wp, &mp, &init.adapters, "cross").unwrap();
    let back = read_adapters(&wp, &mp).unwrap();
    let bits = |v: &[(String, cntlora::initcore::AdapterInit)]| {
        v.iter()
            .flat_map(|(_, a)| {
                a.b.as_slice()
                    .iter()
                    .chain(a.a.as_slice())
                    .map(|x| x.to_bits())
            })
            .collect::<Vec<u64>>()
    };
    let adapters_ok = back == init.adapters && bits(&back) == bits(&init.adapters);
    write_weights(tmp.path().join("d.cntw"), &init.deltas).unwrap();
    let weights_ok = read_weights(tmp.path().join("d.cntw")).unwrap() == init.deltas;

    let runs: Vec<_> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            let mut c = cfg.clone();
            c.vas.enabled = true;
            c.output_dir = d.path().to_path_buf();
            cmd_run(&c, &[], &[]).unwrap();
            let mut sweep = c.clone();
            sweep.vas.enabled = false;
            sweep.output_dir = d.path().join("sweep");
            fs::create_dir(&sweep.output_dir).unwrap();
            cmd_run(&sweep, &["native".into(), "shift".into()], &[1, 2]).unwrap();
            let b = dir_bytes(d.path());
            (d, b)
        })
        .collect();
    let files = runs[0].1.len();
    let outputs_ok = files > 0 && runs[0].1 == runs[1].1;
    Outcome {
        pass: dump_ok && adapters_ok && weights_ok && outputs_ok,
        detail: format!(
            "dump {dump_ok}, adapters {adapters_ok}, weights {weights_ok}, {files} output files byte-identical across two runs {outputs_ok}"
        ),
    }
}

fn main() {
    let mut all = true;
    let mut check = |n: usize, name: &str, o: Outcome| {
        report(n, name, &o);
        all &= o.pass;
    };
    check(1, "closed-form identities", closed_form());
    check(2, "fractional decomposition", decomposition());
    check(3, "variable adapter structure", vas());
    check(4, "gradient suite", gradients());
    let (c5, c6) = race();
    check(5, "convergence direction", c5);
    check(6, "init/final similarity direction", c6);
    check(7, "baseline contracts", baselines());
    check(8, "round trip and determinism", round_trip());
    if !all {
        eprintln!("acceptance criteria failed; see lines above");
        std::process::exit(1);
    }
}
