//! Variable adapter structure: distributes a global rank budget `K` across
//! attachment points by ranking every singular value of every `ΔW` by its
//! relative variance and keeping the top `K`.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::numkit::{svd, Matrix};

/// Singular values of one point's `ΔW`, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularProfile {
    pub point_id: String,
    pub s: Vec<f64>,
}

impl SingularProfile {
    pub fn new(point_id: impl Into<String>, s: Vec<f64>) -> Result<Self> {
        let point_id = point_id.into();
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "{point_id}: singular values must be finite and >= 0"
            )));
        }
        if s.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!(
                "{point_id}: singular values must be descending"
            )));
        }
        Ok(Self { point_id, s })
    }

    pub fn from_delta(point_id: impl Into<String>, delta: &Matrix) -> Result<Self> {
        Self::new(point_id, svd(delta)?.s)
    }

    /// Largest rank this point can hold, `min(k, d)`.
    pub fn max_rank(&self) -> usize {
        self.s.len()
    }
}

/// `v_m = s_m² / Σ_k s_k²`; all zeros when `S` is zero.
pub fn relative_variance(s: &[f64]) -> Vec<f64> {
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return vec![0.0; s.len()];
    }
    s.iter().map(|v| v * v / total).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankAllocation {
    /// Ranks in profile order.
    pub ranks: Vec<(String, usize)>,
    pub budget: usize,
}

impl RankAllocation {
    pub fn rank_of(&self, point_id: &str) -> Option<usize> {
        self.ranks
            .iter()
            .find(|(id, _)| id == point_id)
            .map(|(_, r)| *r)
    }

    pub fn total(&self) -> usize {
        self.ranks.iter().map(|(_, r)| r).sum()
    }

    /// `{point_id: rank, ..., "budget": K}`.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (id, r) in &self.ranks {
            map.insert(id.clone(), Value::from(*r));
        }
        map.insert("budget".into(), Value::from(self.budget));
        Value::Object(map)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Malformed("allocation report must be an object".into()))?;
        let mut budget = None;
        let mut ranks = BTreeMap::new();
        for (k, v) in obj {
            let n = v
                .as_u64()
                .ok_or_else(|| Error::Malformed(format!("allocation entry {k} is not a count")))?
                as usize;
            if k == "budget" {
                budget = Some(n);
            } else {
                ranks.insert(k.clone(), n);
            }
        }
        Ok(Self {
            ranks: ranks.into_iter().collect(),
            budget: budget.ok_or_else(|| Error::Malformed("allocation has no budget".into()))?,
        })
    }
}

/// Default budget: the uniform rank times the number of points.
pub fn default_budget(rank: usize, n_points: usize) -> usize {
    rank * n_points
}

/// Top-`K` selection of relative variances across all profiles.
///
/// Ties break by profile order, then singular-value index. Points left below
/// `min_rank` are topped up with their own next-largest values while the
/// smallest selected values of points above `min_rank` are evicted, so the
/// ranks always sum to `K`.
pub fn allocate_ranks(
    profiles: &[SingularProfile],
    budget: usize,
    min_rank: usize,
) -> Result<RankAllocation> {
    let capacity: usize = profiles.iter().map(SingularProfile::max_rank).sum();
    if budget > capacity {
        return Err(Error::BudgetInfeasible(format!(
            "budget {budget} exceeds total capacity {capacity}"
        )));
    }
    if min_rank * profiles.len() > budget {
        return Err(Error::BudgetInfeasible(format!(
            "min_rank {min_rank} x {} points exceeds budget {budget}",
            profiles.len()
        )));
    }
    if let Some(p) = profiles.iter().find(|p| p.max_rank() < min_rank) {
        return Err(Error::BudgetInfeasible(format!(
            "{} holds at most rank {} < min_rank {min_rank}",
            p.point_id,
            p.max_rank()
        )));
    }

    let mut entries: Vec<(f64, usize, usize)> = profiles
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            relative_variance(&p.s)
                .into_iter()
                .enumerate()
                .map(move |(m, v)| (v, pi, m))
        })
        .collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut selected = vec![false; entries.len()];
    let mut counts = vec![0usize; profiles.len()];
    for (flag, &(_, pi, _)) in selected.iter_mut().zip(&entries).take(budget) {
        *flag = true;
        counts[pi] += 1;
    }

    for pi in 0..profiles.len() {
        while counts[pi] < min_rank {
            // within a point values are descending in index, so the next
            // candidate is the first unselected entry of this point
            let add = (0..entries.len())
                .find(|&e| !selected[e] && entries[e].1 == pi)
                .expect("min_rank <= max_rank checked above");
            let evict = (0..entries.len())
                .rev()
                .find(|&e| selected[e] && counts[entries[e].1] > min_rank && entries[e].1 != pi)
                .expect("min_rank * points <= budget checked above");
            selected[add] = true;
            counts[pi] += 1;
            selected[evict] = false;
            counts[entries[evict].1] -= 1;
        }
    }

    Ok(RankAllocation {
        ranks: profiles
            .iter()
            .zip(counts)
            .map(|(p, c)| (p.point_id.clone(), c))
            .collect(),
        budget,
    })
}
