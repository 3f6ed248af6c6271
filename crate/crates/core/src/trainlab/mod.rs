//! Toy fine-tuning: hand-derived backprop through the frozen network with
//! trainable `(B, A)` factors, optimizers, and init-vs-final metrics.

mod gradcheck;
mod layer;
mod net;
mod optim;
mod report;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{TaskData, ToyModel};
use crate::error::{Error, Result};
use crate::initcore::{AdapterInit, NamedAdapter};
use crate::numkit::{spectral_norm, svd, Matrix};

pub use gradcheck::{finite_difference_grads, gradcheck, GradcheckReport};
pub use layer::{lora_backward, lora_forward, LoraGrads, LoraLayer};
pub use net::{loss_and_grad, FactorGrads, LoraNet, LossKind, Trace};
pub use optim::{Optimizer, OptimizerConfig};
pub use report::{write_metrics_csv, LayerSummary, RunSummary};

/// Trailing window for the smoothed threshold crossing.
pub const SMOOTHING_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub loss: LossKind,
    pub seed: u64,
    pub loss_threshold: f64,
    /// Evaluate on held-out data every this many steps; 0 evaluates only
    /// before and after training.
    #[serde(default)]
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::BadConfig(format!(
                "train.lr must be >= 0, got {}",
                self.lr
            )));
        }
        if self.steps == 0 {
            return Err(Error::BadConfig("train.steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig("train.batch_size must be >= 1".into()));
        }
        if !self.loss_threshold.is_finite() {
            return Err(Error::BadConfig(
                "train.loss_threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: TaskData,
    pub eval: TaskData,
}

/// Similarity between an adapter's starting and trained effective deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitFinalMetrics {
    /// `None` when either delta is identically zero.
    pub cosine: Option<f64>,
    /// `σ_max(ΔW_init − ΔW_final)`.
    pub spectral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetrics {
    pub point_id: String,
    pub metrics: InitFinalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Training minibatch loss before each update.
    pub loss_curve: Vec<(usize, f64)>,
    pub eval_curve: Vec<(usize, f64)>,
    pub steps_to_threshold: Option<usize>,
    pub layers: Vec<LayerMetrics>,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: RunMetrics,
    pub final_adapters: Vec<NamedAdapter>,
    pub net: LoraNet,
}

/// Cosine and spectral distance between two adapters' effective deltas.
pub fn init_final_metrics(init: &AdapterInit, fin: &AdapterInit) -> Result<InitFinalMetrics> {
    if init.layer_shape() != fin.layer_shape() {
        return Err(Error::shape(
            "init_final_metrics",
            format!("{:?}", init.layer_shape()),
            format!("{:?}", fin.layer_shape()),
        ));
    }
    let d0 = init.effective_delta();
    let d1 = fin.effective_delta();
    let (n0, n1) = (d0.frobenius_norm(), d1.frobenius_norm());
    let cosine = if n0 == 0.0 || n1 == 0.0 {
        None
    } else {
        Some((d0.inner(&d1) / (n0 * n1)).clamp(-1.0, 1.0))
    };
    Ok(InitFinalMetrics {
        cosine,
        spectral: spectral_norm(&d0.sub(&d1))?,
    })
}

/// Expected MSE of the best rank-`r` correction on a linear teacher task with
/// standard-normal inputs: the energy of the teacher gap `W* − W_src` outside
/// its top `r` singular directions, per output, plus the label noise.
pub fn best_rank_r_loss(model: &ToyModel, rank: usize, noise_std: f64) -> Result<f64> {
    if model.points().len() != 1 {
        return Err(Error::InvalidArgument(
            "best_rank_r_loss needs a single-layer linear model".into(),
        ));
    }
    let gap = model.teacher()[0].sub(&model.points()[0].w_src);
    let s = svd(&gap)?.s;
    let tail: f64 = s.iter().skip(rank).map(|v| v * v).sum();
    Ok(tail / gap.rows() as f64 + noise_std * noise_std)
}

/// First step whose trailing `window`-step mean is at most `tau`.
pub fn smoothed_crossing(losses: &[f64], window: usize, tau: f64) -> Option<usize> {
    if window == 0 || losses.len() < window {
        return None;
    }
    let mut sum: f64 = losses[..window].iter().sum();
    if sum / window as f64 <= tau {
        return Some(window - 1);
    }
    for t in window..losses.len() {
        sum += losses[t] - losses[t - window];
        if sum / window as f64 <= tau {
            return Some(t);
        }
    }
    None
}

/// Minibatch index stream: reshuffled permutations, or the full set when the
/// batch covers it.
struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Sampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
            batch,
        }
    }

    fn next(&mut self) -> Option<Vec<usize>> {
        let n = self.order.len();
        if self.batch >= n {
            return None;
        }
        if self.pos + self.batch > n {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let idx = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        Some(idx)
    }
}

/// Trains the adapters; only `B` and `A` change.
pub fn train(
    model: &ToyModel,
    adapters: &[NamedAdapter],
    cfg: &TrainConfig,
    data: &Dataset,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut net = LoraNet::new(model, adapters)?;
    let mut opt = Optimizer::new(cfg.optimizer, &net.params());
    let mut sampler = Sampler::new(data.train.len(), cfg.batch_size, cfg.seed);

    let eval = |net: &LoraNet| -> Result<f64> {
        if data.eval.is_empty() {
            return Ok(f64::NAN);
        }
        net.loss(&data.eval.inputs, &data.eval.targets, cfg.loss)
    };

    let initial_eval_loss = eval(&net)?;
    let mut eval_curve = vec![(0, initial_eval_loss)];
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if step > 0 && cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            eval_curve.push((step, eval(&net)?));
        }
        let batch = sampler.next().map(|idx| data.train.select(&idx));
        let batch = batch.as_ref().unwrap_or(&data.train);
        let trace = net.forward(&batch.inputs)?;
        let (loss, d_out) = loss_and_grad(trace.output(), &batch.targets, cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        loss_curve.push((step, loss));
        let grads = net.backward(&trace, &d_out)?;
        let flat: Vec<&Matrix> = grads
            .iter()
            .flatten()
            .flat_map(|g| [&g.d_b, &g.d_a])
            .collect();
        opt.step(cfg.lr, &mut net.params_mut(), &flat);
    }
    let final_eval_loss = eval(&net)?;
    if !data.eval.is_empty() && !final_eval_loss.is_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            loss: final_eval_loss,
        });
    }
    eval_curve.push((cfg.steps, final_eval_loss));

    let final_adapters = net.adapters();
    let layers = adapters
        .iter()
        .map(|(id, init)| {
            let (_, fin) = final_adapters
                .iter()
                .find(|(fid, _)| fid == id)
                .expect("net keeps every adapter");
            Ok(LayerMetrics {
                point_id: id.clone(),
                metrics: init_final_metrics(init, fin)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let raw: Vec<f64> = loss_curve.iter().map(|(_, l)| *l).collect();
    let metrics = RunMetrics {
        steps_to_threshold: smoothed_crossing(&raw, SMOOTHING_WINDOW, cfg.loss_threshold),
        loss_curve,
        eval_curve,
        layers,
        initial_eval_loss,
        final_eval_loss,
    };
    Ok(TrainOutcome {
        metrics,
        final_adapters,
        net,
    })
}
