use crate::error::{Error, Result};
use crate::initcore::AdapterInit;
use crate::numkit::Matrix;

/// Frozen linear map with a trainable low-rank branch:
/// `h = W_src·x + (α/r)·B·(A·x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    pub w_src: Matrix,
    pub b: Matrix,
    pub a: Matrix,
    pub alpha: f64,
    pub rank: usize,
    /// Carried through unchanged so trained adapters keep their metadata.
    pub p: f64,
}

/// Gradients of a scalar loss with respect to the layer's factors and input.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads {
    pub d_b: Matrix,
    pub d_a: Matrix,
    pub d_x: Matrix,
}

impl LoraLayer {
    pub fn new(w_src: Matrix, adapter: AdapterInit) -> Result<Self> {
        if adapter.layer_shape() != w_src.shape() {
            return Err(Error::shape(
                "LoraLayer",
                w_src.shape_str(),
                format!("adapter for {:?}", adapter.layer_shape()),
            ));
        }
        Ok(Self {
            w_src,
            b: adapter.b,
            a: adapter.a,
            alpha: adapter.alpha,
            rank: adapter.rank,
            p: adapter.p,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn adapter(&self) -> AdapterInit {
        AdapterInit {
            b: self.b.clone(),
            a: self.a.clone(),
            rank: self.rank,
            alpha: self.alpha,
            p: self.p,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.w_src.cols() {
            return Err(Error::shape(
                "lora input",
                format!("{} rows", self.w_src.cols()),
                x.shape_str(),
            ));
        }
        Ok(())
    }
}

pub fn lora_forward(layer: &LoraLayer, x: &Matrix) -> Result<Matrix> {
    layer.check_input(x)?;
    let mut out = layer.w_src.dot(x);
    out.axpy(layer.scaling(), &layer.b.dot(&layer.a.dot(x)));
    Ok(out)
}

/// Backpropagates `dL/dY` through the layer.
///
/// With `s = α/r`:
/// `dL/dB = s·dY·Xᵀ·Aᵀ`, `dL/dA = s·Bᵀ·dY·Xᵀ`,
/// `dL/dX = W_srcᵀ·dY + s·Aᵀ·Bᵀ·dY`.
pub fn lora_backward(layer: &LoraLayer, x: &Matrix, d_y: &Matrix) -> Result<LoraGrads> {
    layer.check_input(x)?;
    if d_y.shape() != (layer.w_src.rows(), x.cols()) {
        return Err(Error::shape(
            "lora upstream gradient",
            format!("{}x{}", layer.w_src.rows(), x.cols()),
            d_y.shape_str(),
        ));
    }
    let s = layer.scaling();
    let xt = x.transpose();
    let dy_xt = d_y.dot(&xt);
    let bt_dy = layer.b.transpose().dot(d_y);
    let d_b = dy_xt.dot(&layer.a.transpose()).scale(s);
    let d_a = bt_dy.dot(&xt).scale(s);
    let mut d_x = layer.w_src.transpose().dot(d_y);
    d_x.axpy(s, &layer.a.transpose().dot(&bt_dy));
    Ok(LoraGrads { d_b, d_a, d_x })
}
