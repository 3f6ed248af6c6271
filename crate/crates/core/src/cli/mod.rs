//! Experiment driver: JSON configs, the pipeline stages, and the
//! `capture | init | allocate | train | run | report` subcommands.

mod config;
mod pipeline;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use config::{
    apply_override, parse_assignment, CntMode, DataConfig, ExperimentConfig, InitConfig,
    InitMethod, VasConfig, METHODS, SEED_ENV,
};
pub use pipeline::{
    adapter_for, allocate, capture_activations, estimate_deltas, initialize, run_in_memory,
    sample_dataset, training_base, InitOutcome, RunOutcome,
};
pub use report::{collect_summaries, render_report, MethodStats};

use crate::capture::{build_toy_model, read_dump, read_weights, write_dump, write_weights};
use crate::error::{Error, Result};
use crate::initcore::{read_adapters, write_adapters, NamedAdapter};
use crate::trainlab::{train, write_metrics_csv, RunSummary};
use crate::vas::RankAllocation;

pub const ACTIVATIONS_FILE: &str = "activations.cnta";
pub const ADAPTERS_FILE: &str = "adapters.cntw";
pub const ADAPTERS_META_FILE: &str = "adapters.json";
pub const DELTAS_FILE: &str = "deltas.cntw";
pub const ALLOCATION_FILE: &str = "allocation.json";
pub const TRAINED_FILE: &str = "trained.cntw";
pub const TRAINED_META_FILE: &str = "trained.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(
    name = "cntlora",
    version,
    about = "Constraint-based LoRA initialization lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample init inputs and dump the activations at every attachment point.
    Capture(ConfigArgs),
    /// Build adapters (and VAS allocation) from activations.
    Init {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Activation dump to read instead of capturing afresh.
        #[arg(long)]
        activations: Option<PathBuf>,
    },
    /// Allocate VAS ranks from a `ΔW` file.
    Allocate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output_dir>/deltas.cntw`.
        #[arg(long)]
        deltas: Option<PathBuf>,
    },
    /// Train previously written adapters.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Adapter weight file; the sidecar is the same path with `.json`.
        #[arg(long)]
        adapters: Option<PathBuf>,
    },
    /// Full pipeline, optionally swept over methods and seeds.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated init methods.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Aggregate `summary.json` files into a per-method table.
    Report {
        /// Directories holding run outputs (searched one level deep).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write the CSV; defaults to `<first dir>/report.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus overrides. Flags mirror config keys.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Generic override, `key.path=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long = "init.method")]
    pub init_method: Option<String>,
    #[arg(long = "init.rank")]
    pub init_rank: Option<usize>,
    #[arg(long = "init.alpha")]
    pub init_alpha: Option<f64>,
    #[arg(long = "init.p")]
    pub init_p: Option<f64>,
    #[arg(long = "init.n_init_samples")]
    pub init_n_init_samples: Option<usize>,
    #[arg(long = "vas.enabled")]
    pub vas_enabled: Option<bool>,
    #[arg(long = "vas.budget")]
    pub vas_budget: Option<usize>,
    #[arg(long = "train.lr")]
    pub train_lr: Option<f64>,
    #[arg(long = "train.steps")]
    pub train_steps: Option<usize>,
    #[arg(long = "output_dir")]
    pub output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = self
            .set
            .iter()
            .map(|s| parse_assignment(s))
            .collect::<Result<Vec<_>>>()?;
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_owned(), v));
            }
        };
        push(
            "init.method",
            self.init_method
                .clone()
                .map(|m| serde_json::Value::String(m).to_string()),
        );
        push("init.rank", self.init_rank.map(|v| v.to_string()));
        push("init.alpha", self.init_alpha.map(|v| v.to_string()));
        push("init.p", self.init_p.map(|v| v.to_string()));
        push(
            "init.n_init_samples",
            self.init_n_init_samples.map(|v| v.to_string()),
        );
        push("vas.enabled", self.vas_enabled.map(|v| v.to_string()));
        push("vas.budget", self.vas_budget.map(|v| v.to_string()));
        push("train.lr", self.train_lr.map(|v| v.to_string()));
        push("train.steps", self.train_steps.map(|v| v.to_string()));
        push(
            "output_dir",
            self.output_dir
                .as_ref()
                .map(|p| serde_json::Value::String(p.display().to_string()).to_string()),
        );
        Ok(out)
    }

    pub fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &self.overrides()?)
    }
}

/// Maps a result to the process exit code: 0 ok, 2 diverged, 1 otherwise.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(Error::Diverged { .. }) => 2,
        Err(_) => 1,
    }
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let r = execute(cli.command);
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    exit_code(&r)
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Capture(args) => cmd_capture(&args.load()?),
        Command::Init { cfg, activations } => cmd_init(&cfg.load()?, activations.as_deref()),
        Command::Allocate { cfg, deltas } => cmd_allocate(&cfg.load()?, deltas.as_deref()),
        Command::Train { cfg, adapters } => cmd_train(&cfg.load()?, adapters.as_deref()),
        Command::Run {
            cfg,
            methods,
            seeds,
        } => cmd_run(&cfg.load()?, &methods, &seeds),
        Command::Report { dirs, out } => cmd_report(&dirs, out.as_deref()),
    }
}

fn shape(m: &crate::Matrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

pub fn cmd_capture(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    cfg.check_output_dir()?;
    let model = build_toy_model(&cfg.model)?;
    let batches = capture_activations(&model, cfg)?;
    write_dump(cfg.output_dir.join(ACTIVATIONS_FILE), &batches)?;
    for b in &batches {
        println!("{} batch {}: {}", b.point_id, b.batch_index, shape(&b.x));
    }
    Ok(())
}

fn write_allocation(path: &Path, a: &RankAllocation) -> Result<()> {
    let text = serde_json::to_string_pretty(&a.to_json())? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_init(cfg: &ExperimentConfig, init: &InitOutcome) -> Result<()> {
    let dir = &cfg.output_dir;
    write_adapters(
        dir.join(ADAPTERS_FILE),
        dir.join(ADAPTERS_META_FILE),
        &init.adapters,
        init.method.name(),
    )?;
    if !init.deltas.is_empty() {
        write_weights(dir.join(DELTAS_FILE), &init.deltas)?;
    }
    if let Some(a) = &init.allocation {
        write_allocation(&dir.join(ALLOCATION_FILE), a)?;
    }
    Ok(())
}

fn print_adapters(adapters: &[NamedAdapter]) {
    for (id, ad) in adapters {
        println!(
            "{id}: rank {} |ΔW|_F {:.6}",
            ad.rank,
            ad.effective_delta().frobenius_norm()
        );
    }
}

pub fn cmd_init(cfg: &ExperimentConfig, activations: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    cfg.check_output_dir()?;
    let model = build_toy_model(&cfg.model)?;
    let batches = match activations {
        Some(p) => read_dump(p)?,
        None if cfg.init.method()?.needs_activations() => capture_activations(&model, cfg)?,
        None => Vec::new(),
    };
    let init = initialize(&model, &batches, cfg)?;
    write_init(cfg, &init)?;
    print_adapters(&init.adapters);
    Ok(())
}

pub fn cmd_allocate(cfg: &ExperimentConfig, deltas: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    cfg.check_output_dir()?;
    let path = deltas.map_or_else(|| cfg.output_dir.join(DELTAS_FILE), Path::to_path_buf);
    let deltas = read_weights(&path)?;
    let a = allocate(&deltas, cfg.vas_budget(), cfg.vas.min_rank)?;
    write_allocation(&cfg.output_dir.join(ALLOCATION_FILE), &a)?;
    for (id, r) in &a.ranks {
        println!("{id}: {r}");
    }
    println!("budget: {}", a.budget);
    Ok(())
}

fn sidecar_for(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

pub fn cmd_train(cfg: &ExperimentConfig, adapters: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    cfg.check_output_dir()?;
    let path = adapters.map_or_else(|| cfg.output_dir.join(ADAPTERS_FILE), Path::to_path_buf);
    let adapters = read_adapters(&path, sidecar_for(&path))?;
    let sidecar = sidecar_for(&path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: std::collections::BTreeMap<String, crate::initcore::AdapterMeta> =
        serde_json::from_str(&text)?;
    let method = match meta.values().next() {
        Some(m) => InitMethod::parse(&m.mode)?,
        None => cfg.init.method()?,
    };
    let model = build_toy_model(&cfg.model)?;
    let base = training_base(&model, method, &adapters)?;
    let data = sample_dataset(&model, &cfg.data);
    let out = train(&base, &adapters, &cfg.train, &data)?;
    let summary = RunSummary::new(method.name(), cfg.train.seed, &out.metrics);
    write_train(&cfg.output_dir, method, &out, &summary)?;
    print_summary(&summary);
    Ok(())
}

fn write_train(
    dir: &Path,
    method: InitMethod,
    out: &crate::trainlab::TrainOutcome,
    summary: &RunSummary,
) -> Result<()> {
    write_metrics_csv(dir.join(METRICS_FILE), &out.metrics)?;
    summary.write(dir.join(SUMMARY_FILE))?;
    write_adapters(
        dir.join(TRAINED_FILE),
        dir.join(TRAINED_META_FILE),
        &out.final_adapters,
        method.name(),
    )
}

fn print_summary(s: &RunSummary) {
    let steps = s
        .steps_to_threshold
        .map_or_else(|| "-".to_owned(), |v| v.to_string());
    let cos = s
        .cosine
        .map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
    println!(
        "{} seed {}: steps_to_threshold {steps} final_eval_loss {:.6} cosine {cos} spectral {:.4}",
        s.init_method, s.seed, s.final_eval_loss, s.spectral
    );
}

fn run_one(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let out = run_in_memory(cfg)?;
    let dir = &cfg.output_dir;
    if !out.batches.is_empty() {
        write_dump(dir.join(ACTIVATIONS_FILE), &out.batches)?;
    }
    write_init(cfg, &out.init)?;
    write_train(dir, out.init.method, &out.trained, &out.summary)?;
    Ok(out.summary)
}

/// Runs the pipeline. With `methods` or `seeds` given, every combination
/// gets its own `<method>_seed<seed>` directory and a row in `sweep.csv`.
pub fn cmd_run(cfg: &ExperimentConfig, methods: &[String], seeds: &[u64]) -> Result<()> {
    cfg.validate()?;
    for m in methods {
        InitMethod::parse(m)?;
    }
    cfg.check_output_dir()?;
    if methods.is_empty() && seeds.is_empty() {
        let s = run_one(cfg)?;
        print_summary(&s);
        return Ok(());
    }
    let methods: Vec<String> = if methods.is_empty() {
        vec![cfg.init.method.clone()]
    } else {
        methods.to_vec()
    };
    let seeds: Vec<Option<u64>> = if seeds.is_empty() {
        vec![None]
    } else {
        seeds.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for m in &methods {
        for s in &seeds {
            let mut c = cfg.clone();
            c.init.method = m.clone();
            if let Some(s) = s {
                c.set_seed(*s);
            }
            if c.vas.enabled && !matches!(c.init.method()?, InitMethod::Cnt(_)) {
                c.vas.enabled = false;
            }
            c.validate()?;
            c.output_dir = cfg.output_dir.join(format!("{m}_seed{}", c.train.seed));
            jobs.push(c);
        }
    }
    for c in &jobs {
        fs::create_dir_all(&c.output_dir).map_err(|e| Error::io(&c.output_dir, e))?;
    }
    let results: Vec<Result<RunSummary>> = jobs.par_iter().map(run_one).collect();
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    let path = cfg.output_dir.join(SWEEP_FILE);
    fs::write(&path, report::render_sweep(&summaries)).map_err(|e| Error::io(&path, e))?;
    for s in &summaries {
        print_summary(s);
    }
    Ok(())
}

pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let summaries = collect_summaries(dirs)?;
    if summaries.is_empty() {
        return Err(Error::BadConfig(format!(
            "no {SUMMARY_FILE} found under {}",
            dirs.iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let (table, csv) = render_report(&summaries);
    let path = out.map_or_else(|| dirs[0].join(REPORT_FILE), Path::to_path_buf);
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    print!("{table}");
    Ok(())
}
