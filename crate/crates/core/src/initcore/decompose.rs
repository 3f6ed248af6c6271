use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{qr, svd, Matrix};

/// Trainable LoRA factors: `B` (k × r), `A` (r × d), scale `α`.
///
/// The layer adds `(α/r)·B·A` to its frozen weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterInit {
    pub b: Matrix,
    pub a: Matrix,
    pub rank: usize,
    pub alpha: f64,
    /// Share of the singular values given to `A` (SVD split only).
    pub p: f64,
}

impl AdapterInit {
    pub fn new(b: Matrix, a: Matrix, alpha: f64, p: f64) -> Result<Self> {
        let rank = b.cols();
        if a.rows() != rank {
            return Err(Error::shape(
                "adapter",
                format!("A with {rank} rows"),
                a.shape_str(),
            ));
        }
        if rank == 0 {
            return Err(Error::InvalidArgument("adapter rank must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Self {
            b,
            a,
            rank,
            alpha,
            p,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// `(α/r)·B·A`.
    pub fn effective_delta(&self) -> Matrix {
        self.b.dot(&self.a).scale(self.scaling())
    }

    /// `(k, d)` of the layer this adapter attaches to.
    pub fn layer_shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    #[default]
    Svd,
    Qr,
}

pub(crate) fn check_rank(delta: &Matrix, rank: usize) -> Result<()> {
    let max = delta.rows().min(delta.cols());
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be >= 1".into()));
    }
    if rank > max {
        return Err(Error::RankTooLarge { rank, max });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    Ok(())
}

/// Splits the rank-`r` SVD truncation of `delta` between the two factors.
///
/// With `S' = (r/α)·S`, `B = U[:, :r]·S'^(1−p)` and `A = S'^p·V[:r, :]`, so
/// `(α/r)·B·A` is exactly the truncation for every `p`.
pub fn decompose_svd(delta: &Matrix, rank: usize, p: f64, alpha: f64) -> Result<AdapterInit> {
    check_rank(delta, rank)?;
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "p must lie in [0, 1], got {p}"
        )));
    }
    let f = svd(delta)?;
    let comp = rank as f64 / alpha;
    let s: Vec<f64> = f.s[..rank].iter().map(|v| v * comp).collect();
    let b_scale: Vec<f64> = s.iter().map(|v| v.powf(1.0 - p)).collect();
    let a_scale: Vec<f64> = s.iter().map(|v| v.powf(p)).collect();
    let b = f.u.columns(0, rank).scale_columns(&b_scale);
    let a = f.v.rows_range(0, rank).scale_rows(&a_scale);
    AdapterInit::new(b, a, alpha, p)
}

/// `B = Q[:, :r]`, `A = R[:r, :]` from the QR factorization of `(r/α)·delta`.
pub fn decompose_qr(delta: &Matrix, rank: usize, alpha: f64) -> Result<AdapterInit> {
    check_rank(delta, rank)?;
    check_alpha(alpha)?;
    let (q, r) = qr(&delta.scale(rank as f64 / alpha));
    AdapterInit::new(q.columns(0, rank), r.rows_range(0, rank), alpha, 0.5)
}

pub fn decompose(
    delta: &Matrix,
    method: Decomposition,
    rank: usize,
    p: f64,
    alpha: f64,
) -> Result<AdapterInit> {
    match method {
        Decomposition::Svd => decompose_svd(delta, rank, p, alpha),
        Decomposition::Qr => decompose_qr(delta, rank, alpha),
    }
}
