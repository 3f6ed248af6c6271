use crate::error::Result;
use crate::numkit::Matrix;

use super::net::{loss_and_grad, LoraNet, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// Worst `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖, floor)`
    /// over all trainable matrices.
    pub max_rel_error: f64,
    pub analytic: Vec<Matrix>,
    pub numeric: Vec<Matrix>,
}

/// Norm floor below which a gradient counts as zero.
const ZERO_FLOOR: f64 = 1e-8;

/// Central differences of the loss with respect to every trainable entry.
pub fn finite_difference_grads(
    net: &LoraNet,
    x: &Matrix,
    targets: &Matrix,
    kind: LossKind,
    h: f64,
) -> Result<Vec<Matrix>> {
    let mut probe = net.clone();
    let n_params = probe.params().len();
    let mut out = Vec::with_capacity(n_params);
    for pi in 0..n_params {
        let (rows, cols) = probe.params()[pi].shape();
        let mut g = Matrix::zeros(rows, cols);
        for e in 0..rows * cols {
            let orig = probe.params()[pi].as_slice()[e];
            probe.params_mut()[pi].as_mut_slice()[e] = orig + h;
            let up = probe.loss(x, targets, kind)?;
            probe.params_mut()[pi].as_mut_slice()[e] = orig - h;
            let down = probe.loss(x, targets, kind)?;
            probe.params_mut()[pi].as_mut_slice()[e] = orig;
            g.as_mut_slice()[e] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Compares backprop against central differences with step `h`.
pub fn gradcheck(
    net: &LoraNet,
    x: &Matrix,
    targets: &Matrix,
    kind: LossKind,
    h: f64,
) -> Result<GradcheckReport> {
    let trace = net.forward(x)?;
    let (_, d_out) = loss_and_grad(trace.output(), targets, kind)?;
    let analytic: Vec<Matrix> = net
        .backward(&trace, &d_out)?
        .into_iter()
        .flatten()
        .flat_map(|g| [g.d_b, g.d_a])
        .collect();
    let numeric = finite_difference_grads(net, x, targets, kind, h)?;
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let denom = a.frobenius_norm().max(n.frobenius_norm()).max(ZERO_FLOOR);
            a.sub(n).frobenius_norm() / denom
        })
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        max_rel_error,
        analytic,
        numeric,
    })
}
