use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default)]
        weight_decay: f64,
    },
    AdamW {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adamw(weight_decay: f64) -> Self {
        OptimizerConfig::AdamW {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adamw(0.0)
    }
}

/// Per-parameter optimizer state.
#[derive(Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &[&Matrix]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, lr: f64, params: &mut [&mut Matrix], grads: &[&Matrix]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        match self.cfg {
            OptimizerConfig::Sgd { weight_decay } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    let pv = p.as_mut_slice();
                    for (x, &gx) in pv.iter_mut().zip(g.as_slice()) {
                        *x -= lr * (gx + weight_decay * *x);
                    }
                }
            }
            OptimizerConfig::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    let iter = p
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
                    for ((x, &gx), (mx, vx)) in iter {
                        *mx = beta1 * *mx + (1.0 - beta1) * gx;
                        *vx = beta2 * *vx + (1.0 - beta2) * gx * gx;
                        let update = (*mx / c1) / ((*vx / c2).sqrt() + eps);
                        *x -= lr * (update + weight_decay * *x);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Matrix::from_rows(&[[1.0, -1.0]]);
        let g = Matrix::from_rows(&[[0.3, -2.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::adamw(0.0), &[&p]);
        opt.step(0.1, &mut [&mut p], &[&g]);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-7);
        assert!((p[(0, 1)] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut p = Matrix::from_rows(&[[2.0]]);
        let g = Matrix::zeros(1, 1);
        let mut opt = Optimizer::new(OptimizerConfig::adamw(0.5), &[&p]);
        opt.step(0.1, &mut [&mut p], &[&g]);
        assert!((p[(0, 0)] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn sgd_step() {
        let mut p = Matrix::from_rows(&[[1.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { weight_decay: 0.0 }, &[&p]);
        opt.step(0.5, &mut [&mut p], &[&Matrix::from_rows(&[[2.0]])]);
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn config_json_shape() {
        let cfg: OptimizerConfig = serde_json::from_str(r#"{"kind": "adamw"}"#).unwrap();
        assert_eq!(cfg, OptimizerConfig::adamw(0.0));
        let cfg: OptimizerConfig = serde_json::from_str(r#"{"kind": "sgd"}"#).unwrap();
        assert_eq!(cfg, OptimizerConfig::Sgd { weight_decay: 0.0 });
    }
}
