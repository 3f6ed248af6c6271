//! In-memory stages shared by the subcommands and the examples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::capture::{build_toy_model, ActivationBatch, ToyModel};
use crate::error::Result;
use crate::initcore::decompose;
use crate::initcore::{estimate_delta, init_baseline, AdapterInit, EstimatorConfig, NamedAdapter};
use crate::numkit::Matrix;
use crate::trainlab::{train, Dataset, RunSummary, TrainOutcome};
use crate::vas::{allocate_ranks, RankAllocation, SingularProfile};

use super::config::{DataConfig, ExperimentConfig, InitConfig, InitMethod};

const TRAIN_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Train and eval sets from independent streams of `data.seed`.
pub fn sample_dataset(model: &ToyModel, data: &DataConfig) -> Dataset {
    Dataset {
        train: model.sample_task(
            data.n_train,
            data.noise_std,
            &mut stream(data.seed, TRAIN_STREAM),
        ),
        eval: model.sample_task(
            data.n_eval,
            data.noise_std,
            &mut stream(data.seed, EVAL_STREAM),
        ),
    }
}

/// Target-task inputs pushed through the pretrained network, split
/// column-wise into `n_init_batches` batches per attachment point.
pub fn capture_activations(
    model: &ToyModel,
    cfg: &ExperimentConfig,
) -> Result<Vec<ActivationBatch>> {
    let n = cfg.init.n_init_samples;
    let task = model.sample_task(
        n,
        cfg.data.noise_std,
        &mut stream(cfg.data.seed, INIT_STREAM),
    );
    let full = model.forward_capture(&task.inputs)?;
    let nb = cfg.init.n_init_batches.max(1).min(n.max(1));
    let mut out = Vec::with_capacity(full.len() * nb);
    for b in full {
        for j in 0..nb {
            let (start, end) = (j * n / nb, (j + 1) * n / nb);
            out.push(ActivationBatch {
                point_id: b.point_id.clone(),
                x: b.x.columns(start, end),
                batch_index: j,
            });
        }
    }
    Ok(out)
}

fn batches_for<'a>(batches: &'a [ActivationBatch], id: &str) -> Vec<&'a Matrix> {
    batches
        .iter()
        .filter(|b| b.point_id == id)
        .map(|b| &b.x)
        .collect()
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub method: InitMethod,
    pub adapters: Vec<NamedAdapter>,
    /// `ΔW` per point (constraint modes only).
    pub deltas: Vec<(String, Matrix)>,
    pub allocation: Option<RankAllocation>,
}

/// Per-point `ΔW` for a constraint mode.
pub fn estimate_deltas(
    model: &ToyModel,
    batches: &[ActivationBatch],
    init: &InitConfig,
) -> Result<Vec<(String, Matrix)>> {
    let InitMethod::Cnt(mode) = init.method()? else {
        return Ok(Vec::new());
    };
    let mut ecfg = EstimatorConfig::new(init.constraint_mode(mode));
    ecfg.rcond = init.rcond;
    ecfg.normalize_weights = init.normalize_weights;
    ecfg.p = init.p;
    ecfg.decomp = init.decomp;
    model
        .points()
        .iter()
        .map(|p| {
            Ok((
                p.id.clone(),
                estimate_delta(&p.w_src, &batches_for(batches, &p.id), &ecfg)?,
            ))
        })
        .collect()
}

/// VAS allocation over the singular values of each `ΔW`.
pub fn allocate(
    deltas: &[(String, Matrix)],
    budget: usize,
    min_rank: usize,
) -> Result<RankAllocation> {
    let profiles = deltas
        .iter()
        .map(|(id, d)| SingularProfile::from_delta(id.clone(), d))
        .collect::<Result<Vec<_>>>()?;
    allocate_ranks(&profiles, budget, min_rank)
}

/// Builds adapters for every attachment point. With VAS, points allocated
/// rank 0 get no adapter.
pub fn initialize(
    model: &ToyModel,
    batches: &[ActivationBatch],
    cfg: &ExperimentConfig,
) -> Result<InitOutcome> {
    let init = &cfg.init;
    let method = init.method()?;
    match method {
        InitMethod::Cnt(_) => {
            let deltas = estimate_deltas(model, batches, init)?;
            let allocation = if cfg.vas.enabled {
                Some(allocate(&deltas, cfg.vas_budget(), cfg.vas.min_rank)?)
            } else {
                None
            };
            let mut adapters = Vec::new();
            for (id, delta) in &deltas {
                let rank = allocation
                    .as_ref()
                    .and_then(|a| a.rank_of(id))
                    .unwrap_or(init.rank);
                if rank > 0 {
                    adapters.push((
                        id.clone(),
                        decompose(delta, init.decomp, rank, init.p, init.alpha)?,
                    ));
                }
            }
            Ok(InitOutcome {
                method,
                adapters,
                deltas,
                allocation,
            })
        }
        InitMethod::Baseline(kind) => {
            let adapters = model
                .points()
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let xs = batches_for(batches, &p.id);
                    let xs = kind.needs_activations().then_some(xs.as_slice());
                    let seed = init.seed.wrapping_add(i as u64);
                    Ok((
                        p.id.clone(),
                        init_baseline(kind, &p.w_src, xs, init.rank, init.alpha, seed)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(InitOutcome {
                method,
                adapters,
                deltas: Vec::new(),
                allocation: None,
            })
        }
    }
}

/// The network training starts from: the pretrained model, or for
/// weight-derived baselines its residual after removing the adapter.
pub fn training_base(
    model: &ToyModel,
    method: InitMethod,
    adapters: &[NamedAdapter],
) -> Result<ToyModel> {
    let InitMethod::Baseline(kind) = method else {
        return Ok(model.clone());
    };
    if !kind.uses_residual() {
        return Ok(model.clone());
    }
    let weights = model
        .points()
        .iter()
        .map(|p| match adapters.iter().find(|(id, _)| *id == p.id) {
            Some((_, ad)) => p.w_src.sub(&ad.effective_delta()),
            None => p.w_src.clone(),
        })
        .collect();
    model.with_source_weights(weights)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: ToyModel,
    pub batches: Vec<ActivationBatch>,
    pub init: InitOutcome,
    pub trained: TrainOutcome,
    pub summary: RunSummary,
}

/// Runs one configuration end to end without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let model = build_toy_model(&cfg.model)?;
    let method = cfg.init.method()?;
    let batches = if method.needs_activations() {
        capture_activations(&model, cfg)?
    } else {
        Vec::new()
    };
    let init = initialize(&model, &batches, cfg)?;
    let base = training_base(&model, method, &init.adapters)?;
    let data = sample_dataset(&model, &cfg.data);
    let trained = train(&base, &init.adapters, &cfg.train, &data)?;
    let summary = RunSummary::new(method.name(), cfg.train.seed, &trained.metrics);
    Ok(RunOutcome {
        model,
        batches,
        init,
        trained,
        summary,
    })
}

/// Adapters keyed like the frozen weights, for quick lookups.
pub fn adapter_for<'a>(adapters: &'a [NamedAdapter], id: &str) -> Option<&'a AdapterInit> {
    adapters.iter().find(|(a, _)| a == id).map(|(_, ad)| ad)
}
