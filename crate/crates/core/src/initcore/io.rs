//! Adapter files: factors in a `CNTW` weight file (`<id>.B`, `<id>.A`) plus a
//! JSON sidecar `{point_id: {rank, alpha, p, mode}}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capture::{read_weights, write_weights};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

use super::AdapterInit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterMeta {
    pub rank: usize,
    pub alpha: f64,
    pub p: f64,
    pub mode: String,
}

pub type NamedAdapter = (String, AdapterInit);

pub fn write_adapters(
    weights_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
    adapters: &[NamedAdapter],
    mode: &str,
) -> Result<()> {
    let mut weights: Vec<(String, Matrix)> = Vec::with_capacity(2 * adapters.len());
    let mut meta = BTreeMap::new();
    for (id, ad) in adapters {
        weights.push((format!("{id}.B"), ad.b.clone()));
        weights.push((format!("{id}.A"), ad.a.clone()));
        meta.insert(
            id.clone(),
            AdapterMeta {
                rank: ad.rank,
                alpha: ad.alpha,
                p: ad.p,
                mode: mode.to_owned(),
            },
        );
    }
    write_weights(weights_path, &weights)?;
    let sidecar = sidecar_path.as_ref();
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar, json + "\n").map_err(|e| Error::io(sidecar, e))
}

/// Reads adapters back in weight-file order.
pub fn read_adapters(
    weights_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<Vec<NamedAdapter>> {
    let sidecar = sidecar_path.as_ref();
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: BTreeMap<String, AdapterMeta> = serde_json::from_str(&text)?;

    let mut out = Vec::new();
    let mut pending_b: Option<(String, Matrix)> = None;
    for (name, m) in read_weights(weights_path)? {
        if let Some(id) = name.strip_suffix(".B") {
            pending_b = Some((id.to_owned(), m));
        } else if let Some(id) = name.strip_suffix(".A") {
            let Some((b_id, b)) = pending_b.take().filter(|(b_id, _)| b_id == id) else {
                return Err(Error::Malformed(format!("{name} without preceding {id}.B")));
            };
            let info = meta
                .get(&b_id)
                .ok_or_else(|| Error::Malformed(format!("sidecar has no entry for {b_id}")))?;
            let ad = AdapterInit::new(b, m, info.alpha, info.p)?;
            if ad.rank != info.rank {
                return Err(Error::Malformed(format!(
                    "{b_id}: sidecar rank {} but factors have rank {}",
                    info.rank, ad.rank
                )));
            }
            out.push((b_id, ad));
        } else {
            return Err(Error::Malformed(format!("unexpected weight id {name}")));
        }
    }
    if let Some((id, _)) = pending_b {
        return Err(Error::Malformed(format!("{id}.B without {id}.A")));
    }
    Ok(out)
}
