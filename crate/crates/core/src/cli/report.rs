use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainlab::RunSummary;

use super::SUMMARY_FILE;

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `method,seed,steps_to_threshold,final_eval_loss,cosine,spectral`.
pub fn render_sweep(rows: &[RunSummary]) -> String {
    let mut out = String::from("method,seed,steps_to_threshold,final_eval_loss,cosine,spectral\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.init_method,
            s.seed,
            opt(s.steps_to_threshold),
            s.final_eval_loss,
            opt(s.cosine),
            s.spectral
        );
    }
    out
}

/// `summary.json` files in each directory and its immediate subdirectories,
/// in sorted path order.
pub fn collect_summaries(dirs: &[PathBuf]) -> Result<Vec<RunSummary>> {
    let mut paths = Vec::new();
    for dir in dirs {
        let direct = dir.join(SUMMARY_FILE);
        if direct.is_file() {
            paths.push(direct);
        }
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut subs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .map(|p| p.join(SUMMARY_FILE))
            .filter(|p| p.is_file())
            .collect();
        subs.sort();
        paths.extend(subs);
    }
    paths
        .iter()
        .map(|p: &PathBuf| RunSummary::read(Path::new(p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub method: String,
    pub runs: usize,
    /// Median with runs that never crossed counted as slowest; `None` when
    /// the median run never crossed.
    pub median_steps: Option<f64>,
    pub mean_final_eval_loss: f64,
    pub mean_cosine: Option<f64>,
    pub mean_spectral: f64,
}

pub fn median_steps(steps: &[Option<usize>]) -> Option<f64> {
    if steps.is_empty() {
        return None;
    }
    let mut v: Vec<Option<usize>> = steps.to_vec();
    // None sorts after every Some
    v.sort_by_key(|s| s.map_or((1, 0), |x| (0, x)));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2].map(|x| x as f64)
    } else {
        match (v[n / 2 - 1], v[n / 2]) {
            (Some(a), Some(b)) => Some((a + b) as f64 / 2.0),
            _ => None,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn method_stats(rows: &[RunSummary]) -> Vec<MethodStats> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.init_method.as_str()) {
            order.push(&r.init_method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let rs: Vec<&RunSummary> = rows.iter().filter(|r| r.init_method == m).collect();
            let steps: Vec<Option<usize>> = rs.iter().map(|r| r.steps_to_threshold).collect();
            let cos: Vec<f64> = rs.iter().filter_map(|r| r.cosine).collect();
            MethodStats {
                method: m.to_owned(),
                runs: rs.len(),
                median_steps: median_steps(&steps),
                mean_final_eval_loss: mean(
                    &rs.iter().map(|r| r.final_eval_loss).collect::<Vec<_>>(),
                ),
                mean_cosine: (!cos.is_empty()).then(|| mean(&cos)),
                mean_spectral: mean(&rs.iter().map(|r| r.spectral).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Aligned text table and the matching CSV.
pub fn render_report(rows: &[RunSummary]) -> (String, String) {
    let stats = method_stats(rows);
    let mut table = format!(
        "{:<8} {:>4} {:>12} {:>16} {:>8} {:>10}\n",
        "method", "runs", "median_steps", "final_eval_loss", "cosine", "spectral"
    );
    let mut csv =
        String::from("method,runs,median_steps,mean_final_eval_loss,mean_cosine,mean_spectral\n");
    for s in &stats {
        let steps = s
            .median_steps
            .map_or_else(|| "-".to_owned(), |v| format!("{v}"));
        let cos = s
            .mean_cosine
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        let _ = writeln!(
            table,
            "{:<8} {:>4} {:>12} {:>16.6} {:>8} {:>10.4}",
            s.method, s.runs, steps, s.mean_final_eval_loss, cos, s.mean_spectral
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.method,
            s.runs,
            opt(s.median_steps),
            s.mean_final_eval_loss,
            opt(s.mean_cosine),
            s.mean_spectral
        );
    }
    (table, csv)
}
