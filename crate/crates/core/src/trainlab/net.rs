use serde::{Deserialize, Serialize};

use crate::capture::{Nonlinearity, ToyModel};
use crate::error::{Error, Result};
use crate::initcore::{AdapterInit, NamedAdapter};
use crate::numkit::Matrix;

use super::layer::{lora_backward, lora_forward, LoraLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    /// Softmax cross-entropy against the argmax of each target column.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
enum NetLayer {
    Frozen(Matrix),
    Lora(LoraLayer),
}

impl NetLayer {
    fn w_src(&self) -> &Matrix {
        match self {
            NetLayer::Frozen(w) => w,
            NetLayer::Lora(l) => &l.w_src,
        }
    }
}

/// The toy network with adapters attached. Points without an adapter stay
/// frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraNet {
    ids: Vec<String>,
    layers: Vec<NetLayer>,
    act: Nonlinearity,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug)]
pub struct Trace {
    /// Input to each layer (after the previous nonlinearity).
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.pre.last().expect("at least one layer")
    }
}

/// Gradients for one adapted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGrads {
    pub d_b: Matrix,
    pub d_a: Matrix,
}

impl LoraNet {
    pub fn new(model: &ToyModel, adapters: &[NamedAdapter]) -> Result<Self> {
        for (id, _) in adapters {
            if model.point(id).is_none() {
                return Err(Error::BadConfig(format!("adapter for unknown point {id}")));
            }
        }
        let mut layers = Vec::new();
        let mut ids = Vec::new();
        for p in model.points() {
            let layer = match adapters.iter().find(|(id, _)| *id == p.id) {
                Some((_, ad)) => NetLayer::Lora(LoraLayer::new(p.w_src.clone(), ad.clone())?),
                None => NetLayer::Frozen(p.w_src.clone()),
            };
            layers.push(layer);
            ids.push(p.id.clone());
        }
        Ok(Self {
            ids,
            layers,
            act: model.nonlinearity(),
        })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                let act = self.act;
                h = pre[i - 1].map(|v| act.apply(v));
            }
            let out = match layer {
                NetLayer::Frozen(w) => {
                    if h.rows() != w.cols() {
                        return Err(Error::shape(
                            "net input",
                            format!("{} rows", w.cols()),
                            h.shape_str(),
                        ));
                    }
                    w.dot(&h)
                }
                NetLayer::Lora(l) => lora_forward(l, &h)?,
            };
            inputs.push(h.clone());
            pre.push(out);
        }
        Ok(Trace { inputs, pre })
    }

    /// Gradients of the loss for every adapted layer (`None` for frozen ones).
    pub fn backward(&self, trace: &Trace, d_out: &Matrix) -> Result<Vec<Option<FactorGrads>>> {
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &trace.inputs[i];
            let d_x = match &self.layers[i] {
                NetLayer::Frozen(w) => w.transpose().dot(&upstream),
                NetLayer::Lora(l) => {
                    let g = lora_backward(l, x, &upstream)?;
                    grads[i] = Some(FactorGrads {
                        d_b: g.d_b,
                        d_a: g.d_a,
                    });
                    g.d_x
                }
            };
            if i > 0 {
                let act = self.act;
                upstream = d_x.zip_with(&trace.pre[i - 1], |g, z| g * act.derivative(z));
            }
        }
        Ok(grads)
    }

    pub fn loss(&self, x: &Matrix, targets: &Matrix, kind: LossKind) -> Result<f64> {
        let trace = self.forward(x)?;
        Ok(loss_and_grad(trace.output(), targets, kind)?.0)
    }

    /// Mutable access to every trainable matrix, `[B₀, A₀, B₁, A₁, ...]`.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let NetLayer::Lora(l) = layer {
                out.push(&mut l.b);
                out.push(&mut l.a);
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let NetLayer::Lora(l) = layer {
                out.push(&l.b);
                out.push(&l.a);
            }
        }
        out
    }

    pub fn adapters(&self) -> Vec<(String, AdapterInit)> {
        self.ids
            .iter()
            .zip(&self.layers)
            .filter_map(|(id, l)| match l {
                NetLayer::Lora(l) => Some((id.clone(), l.adapter())),
                NetLayer::Frozen(_) => None,
            })
            .collect()
    }

    pub fn frozen_weights(&self) -> Vec<&Matrix> {
        self.layers.iter().map(NetLayer::w_src).collect()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Mean loss over the batch and its gradient with respect to the output.
///
/// MSE averages over all `k × b` entries.
pub fn loss_and_grad(output: &Matrix, targets: &Matrix, kind: LossKind) -> Result<(f64, Matrix)> {
    if output.shape() != targets.shape() {
        return Err(Error::shape(
            "loss",
            output.shape_str(),
            targets.shape_str(),
        ));
    }
    let (k, b) = output.shape();
    match kind {
        LossKind::Mse => {
            let n = (k * b) as f64;
            let diff = output.sub(targets);
            let loss = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
            Ok((loss, diff.scale(2.0 / n)))
        }
        LossKind::CrossEntropy => {
            let mut grad = Matrix::zeros(k, b);
            let mut loss = 0.0;
            for j in 0..b {
                let col = output.column(j);
                let label = argmax(&targets.column(j));
                let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = col.iter().map(|v| (v - m).exp()).sum();
                loss += z.ln() + m - col[label];
                for i in 0..k {
                    let p = (col[i] - m).exp() / z;
                    grad[(i, j)] = (p - if i == label { 1.0 } else { 0.0 }) / b as f64;
                }
            }
            Ok((loss / b as f64, grad))
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
