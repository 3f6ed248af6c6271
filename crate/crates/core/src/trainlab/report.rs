use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RunMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub point_id: String,
    pub cosine: Option<f64>,
    pub spectral: f64,
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub init_method: String,
    pub seed: u64,
    pub steps_to_threshold: Option<usize>,
    /// Mean over layers with a defined cosine.
    pub cosine: Option<f64>,
    /// Mean over layers.
    pub spectral: f64,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub final_train_loss: f64,
    pub layers: Vec<LayerSummary>,
}

impl RunSummary {
    pub fn new(init_method: impl Into<String>, seed: u64, m: &RunMetrics) -> Self {
        let cosines: Vec<f64> = m.layers.iter().filter_map(|l| l.metrics.cosine).collect();
        let cosine = if cosines.is_empty() {
            None
        } else {
            Some(cosines.iter().sum::<f64>() / cosines.len() as f64)
        };
        let spectral = if m.layers.is_empty() {
            0.0
        } else {
            m.layers.iter().map(|l| l.metrics.spectral).sum::<f64>() / m.layers.len() as f64
        };
        Self {
            init_method: init_method.into(),
            seed,
            steps_to_threshold: m.steps_to_threshold,
            cosine,
            spectral,
            initial_eval_loss: m.initial_eval_loss,
            final_eval_loss: m.final_eval_loss,
            final_train_loss: m.loss_curve.last().map_or(f64::NAN, |(_, l)| *l),
            layers: m
                .layers
                .iter()
                .map(|l| LayerSummary {
                    point_id: l.point_id.clone(),
                    cosine: l.metrics.cosine,
                    spectral: l.metrics.spectral,
                })
                .collect(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `step,loss,eval_loss`; `eval_loss` is empty on steps without evaluation.
/// The final evaluation gets its own row with an empty `loss`.
pub fn render_metrics_csv(m: &RunMetrics) -> String {
    let mut out = String::from("step,loss,eval_loss\n");
    let mut evals = m.eval_curve.iter().peekable();
    for &(step, loss) in &m.loss_curve {
        let _ = write!(out, "{step},{loss}");
        match evals.peek() {
            Some(&&(s, e)) if s == step => {
                let _ = writeln!(out, ",{e}");
                evals.next();
            }
            _ => out.push_str(",\n"),
        }
    }
    for &(s, e) in evals {
        let _ = writeln!(out, "{s},,{e}");
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, m: &RunMetrics) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_metrics_csv(m)).map_err(|e| Error::io(path, e))
}
