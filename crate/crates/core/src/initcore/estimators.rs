//! Closed-form target-weight estimates for the three constraint sets.
//!
//! Every estimator maps a frozen weight `W_src` (k × d) and a batch of target
//! activations `X` (d × b) to an estimate of the fine-tuned weight (k × d).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{eig_sym, pinv, Matrix};

/// The `C` hyper-parameter of shift mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMatrix {
    /// `c · I_k`.
    Scaled(f64),
    /// Explicit `k × k` matrix.
    Full(Matrix),
}

impl Default for ShiftMatrix {
    fn default() -> Self {
        ShiftMatrix::Scaled(1.0)
    }
}

impl ShiftMatrix {
    pub fn resolve(&self, k: usize) -> Result<Matrix> {
        match self {
            ShiftMatrix::Scaled(c) => Ok(Matrix::identity(k).scale(*c)),
            ShiftMatrix::Full(m) if m.shape() == (k, k) => Ok(m.clone()),
            ShiftMatrix::Full(m) => Err(Error::shape("shift C", format!("{k}x{k}"), m.shape_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Output activations match and inputs are cross-correlated.
    Cross,
    /// Output covariances match and source inputs are whitened.
    SelfMode,
    /// Output covariances differ by a constant `C`.
    Shift(ShiftMatrix),
}

impl ConstraintMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintMode::Cross => "cross",
            ConstraintMode::SelfMode => "self",
            ConstraintMode::Shift(_) => "shift",
        }
    }

    pub fn estimate(&self, w_src: &Matrix, x: &Matrix, rcond: f64) -> Result<Matrix> {
        match self {
            ConstraintMode::Cross => estimate_cross(w_src, x, rcond),
            ConstraintMode::SelfMode => estimate_self(w_src, x, rcond),
            ConstraintMode::Shift(c) => {
                let c = c.resolve(w_src.rows())?;
                estimate_shift(w_src, x, &c, rcond)
            }
        }
    }
}

fn check_activations(w_src: &Matrix, x: &Matrix) -> Result<()> {
    if x.rows() != w_src.cols() {
        return Err(Error::shape(
            "activations",
            format!("{} rows (W_src is {})", w_src.cols(), w_src.shape_str()),
            x.shape_str(),
        ));
    }
    Ok(())
}

/// `W_src · (X Xᵀ)†`.
pub fn estimate_cross(w_src: &Matrix, x: &Matrix, rcond: f64) -> Result<Matrix> {
    check_activations(w_src, x)?;
    Ok(w_src.dot(&pinv(&x.gram(), rcond)?))
}

/// `W_src · (P D^½)†` where `X Xᵀ = P D Pᵀ`.
///
/// `P` comes from [`eig_sym`] (descending eigenvalues, fixed sign convention);
/// the estimate depends on that basis choice, while the covariance identity
/// `W_tar X Xᵀ W_tarᵀ = W_src W_srcᵀ` holds for any choice.
pub fn estimate_self(w_src: &Matrix, x: &Matrix, rcond: f64) -> Result<Matrix> {
    check_activations(w_src, x)?;
    let eig = eig_sym(&x.gram())?;
    // same numerical rank for X Xᵀ as the cross-mode pseudo-inverse sees
    let cut = rcond * eig.d.first().copied().unwrap_or(0.0);
    let sqrt_d: Vec<f64> = eig
        .d
        .iter()
        .map(|&v| if v > cut { v.sqrt() } else { 0.0 })
        .collect();
    Ok(w_src.dot(&pinv(&eig.p.scale_columns(&sqrt_d), rcond)?))
}

/// `C · (W_srcᵀ − X Xᵀ W_srcᵀ)†` with `C` of shape `k × k`.
pub fn estimate_shift(w_src: &Matrix, x: &Matrix, c: &Matrix, rcond: f64) -> Result<Matrix> {
    check_activations(w_src, x)?;
    let k = w_src.rows();
    if c.shape() != (k, k) {
        return Err(Error::shape("shift C", format!("{k}x{k}"), c.shape_str()));
    }
    let wt = w_src.transpose();
    let bracket = wt.sub(&x.gram().dot(&wt));
    Ok(c.dot(&pinv(&bracket, rcond)?))
}

/// `(W₀ + Σⱼ wⱼ·W_tar,ⱼ) / (B + 1)`.
///
/// With `normalize` the denominator becomes `1 + Σⱼ wⱼ`, giving a weighted
/// mean; the default literal form divides by the batch count plus one
/// regardless of the weights.
pub fn aggregate_batches(
    w0: &Matrix,
    per_batch: &[Matrix],
    weights: &[f64],
    normalize: bool,
) -> Result<Matrix> {
    if per_batch.is_empty() {
        return Err(Error::InvalidArgument("aggregate over zero batches".into()));
    }
    if per_batch.len() != weights.len() {
        return Err(Error::shape(
            "batch weights",
            format!("{} weights", per_batch.len()),
            format!("{} weights", weights.len()),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "batch weights must be finite and >= 0, got {w}"
        )));
    }
    let mut acc = w0.clone();
    for (m, &w) in per_batch.iter().zip(weights) {
        if m.shape() != w0.shape() {
            return Err(Error::shape("aggregate", w0.shape_str(), m.shape_str()));
        }
        acc.axpy(w, m);
    }
    let denom = if normalize {
        1.0 + weights.iter().sum::<f64>()
    } else {
        per_batch.len() as f64 + 1.0
    };
    Ok(acc.scale(1.0 / denom))
}
