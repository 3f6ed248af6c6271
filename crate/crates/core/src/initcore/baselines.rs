//! Competing initializers expressed in the same framework.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::gaussian;
use crate::error::{Error, Result};
use crate::numkit::{eig_sym, pinv, svd, Matrix, DEFAULT_RCOND};

use super::decompose::{check_rank, decompose_qr, decompose_svd, AdapterInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// `B = 0`, `A` Gaussian.
    #[serde(rename = "native")]
    NativeLora,
    /// `ΔW = W_src`, square-root SVD split.
    Pissa,
    /// `ΔW = W_src`, QR split.
    Olora,
    /// `A` from the top right-singular directions of the activations, `B = 0`.
    Eva,
    /// SVD of the covariance-weighted weight `W_src·X·Xᵀ`.
    Corda,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::NativeLora => "native",
            BaselineKind::Pissa => "pissa",
            BaselineKind::Olora => "olora",
            BaselineKind::Eva => "eva",
            BaselineKind::Corda => "corda",
        }
    }

    pub fn needs_activations(self) -> bool {
        matches!(self, BaselineKind::Eva | BaselineKind::Corda)
    }

    /// Kinds that carve their adapter out of `W_src`; training should then
    /// freeze the residual `W_src − (α/r)·B·A` so the starting network is
    /// unchanged.
    pub fn uses_residual(self) -> bool {
        matches!(
            self,
            BaselineKind::Pissa | BaselineKind::Olora | BaselineKind::Corda
        )
    }
}

pub fn init_baseline<X: AsRef<Matrix>>(
    kind: BaselineKind,
    w_src: &Matrix,
    batches: Option<&[X]>,
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<AdapterInit> {
    check_rank(w_src, rank)?;
    let (k, d) = w_src.shape();
    match kind {
        BaselineKind::NativeLora => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(&mut rng, rank, d, 1.0 / (d as f64).sqrt());
            AdapterInit::new(Matrix::zeros(k, rank), a, alpha, 0.5)
        }
        BaselineKind::Pissa => decompose_svd(w_src, rank, 0.5, alpha),
        BaselineKind::Olora => decompose_qr(w_src, rank, alpha),
        BaselineKind::Eva => {
            let x = stacked(kind, w_src, batches)?;
            let eig = eig_sym(&x.gram())?;
            let a = eig.p.columns(0, rank).transpose();
            AdapterInit::new(Matrix::zeros(k, rank), a, alpha, 0.5)
        }
        BaselineKind::Corda => {
            let x = stacked(kind, w_src, batches)?;
            let cov = x.gram();
            let f = svd(&w_src.dot(&cov))?;
            let comp = rank as f64 / alpha;
            let root: Vec<f64> = f.s[..rank].iter().map(|s| (s * comp).sqrt()).collect();
            let b = f.u.columns(0, rank).scale_columns(&root);
            let a =
                f.v.dot(&pinv(&cov, DEFAULT_RCOND)?)
                    .rows_range(0, rank)
                    .scale_rows(&root);
            AdapterInit::new(b, a, alpha, 0.5)
        }
    }
}

/// All batches side by side as one `d × Σb` matrix.
fn stacked<X: AsRef<Matrix>>(
    kind: BaselineKind,
    w_src: &Matrix,
    batches: Option<&[X]>,
) -> Result<Matrix> {
    let batches = match batches {
        Some(b) if !b.is_empty() => b,
        _ => return Err(Error::MissingActivations(kind.name())),
    };
    let parts: Vec<Matrix> = batches.iter().map(|b| b.as_ref().clone()).collect();
    let x = Matrix::hstack(&parts)?;
    if x.rows() != w_src.cols() {
        return Err(Error::shape(
            "activations",
            format!("{} rows", w_src.cols()),
            x.shape_str(),
        ));
    }
    Ok(x)
}

/// Gaussian factors rescaled so the effective delta has the same Frobenius
/// norm as `reference`'s. Serves as a direction-free control.
pub fn random_like(reference: &AdapterInit, seed: u64) -> Result<AdapterInit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, d) = reference.layer_shape();
    let r = reference.rank;
    let b = gaussian(&mut rng, k, r, 1.0);
    let a = gaussian(&mut rng, r, d, 1.0);
    let mut out = AdapterInit::new(b, a, reference.alpha, reference.p)?;
    let target = reference.effective_delta().frobenius_norm();
    let current = out.effective_delta().frobenius_norm();
    if current > 0.0 {
        let s = (target / current).sqrt();
        out.b = out.b.scale(s);
        out.a = out.a.scale(s);
    }
    Ok(out)
}
