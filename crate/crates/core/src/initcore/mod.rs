//! Training-free adapter initialization.
//!
//! Per attachment point: estimate a target weight from each activation batch
//! with one of the constraint modes, average the estimates together with a
//! prior weight `W₀`, subtract the frozen weight to get `ΔW`, and split `ΔW`
//! into the LoRA factors.

mod baselines;
mod decompose;
mod estimators;
mod io;

pub use baselines::{init_baseline, random_like, BaselineKind};
pub use decompose::{decompose, decompose_qr, decompose_svd, AdapterInit, Decomposition};
pub use estimators::{
    aggregate_batches, estimate_cross, estimate_self, estimate_shift, ConstraintMode, ShiftMatrix,
};
pub use io::{read_adapters, write_adapters, AdapterMeta, NamedAdapter};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, DEFAULT_RCOND};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub mode: ConstraintMode,
    pub rcond: f64,
    /// Per-batch weights; `None` means 1 for every batch.
    pub batch_weights: Option<Vec<f64>>,
    /// Prior weight in the batch average; `None` means `W_src`.
    pub w0: Option<Matrix>,
    /// Divide by `1 + Σw` instead of `B + 1`.
    pub normalize_weights: bool,
    pub p: f64,
    pub decomp: Decomposition,
}

impl EstimatorConfig {
    pub fn new(mode: ConstraintMode) -> Self {
        Self {
            mode,
            rcond: DEFAULT_RCOND,
            batch_weights: None,
            w0: None,
            normalize_weights: false,
            p: 0.5,
            decomp: Decomposition::Svd,
        }
    }
}

/// Result of [`init_cntlora`]: the factors plus the `ΔW` they were cut from.
#[derive(Debug, Clone)]
pub struct CntInit {
    pub adapter: AdapterInit,
    pub delta: Matrix,
}

/// `ΔW_est = W_est − W_src`, with `W_est` the batch-averaged estimate.
pub fn estimate_delta<X: AsRef<Matrix>>(
    w_src: &Matrix,
    batches: &[X],
    cfg: &EstimatorConfig,
) -> Result<Matrix> {
    if batches.is_empty() {
        return Err(Error::MissingActivations(cfg.mode.name()));
    }
    let per_batch = batches
        .iter()
        .map(|x| cfg.mode.estimate(w_src, x.as_ref(), cfg.rcond))
        .collect::<Result<Vec<_>>>()?;
    let ones;
    let weights = match &cfg.batch_weights {
        Some(w) => w.as_slice(),
        None => {
            ones = vec![1.0; per_batch.len()];
            &ones
        }
    };
    let w0 = cfg.w0.as_ref().unwrap_or(w_src);
    let w_est = aggregate_batches(w0, &per_batch, weights, cfg.normalize_weights)?;
    Ok(w_est.sub(w_src))
}

pub fn init_cntlora<X: AsRef<Matrix>>(
    w_src: &Matrix,
    batches: &[X],
    cfg: &EstimatorConfig,
    rank: usize,
    alpha: f64,
) -> Result<CntInit> {
    let delta = estimate_delta(w_src, batches, cfg)?;
    let adapter = decompose(&delta, cfg.decomp, rank, cfg.p, alpha)?;
    Ok(CntInit { adapter, delta })
}
