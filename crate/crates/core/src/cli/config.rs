use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::capture::ToyModelConfig;
use crate::error::{Error, Result};
use crate::initcore::{BaselineKind, ConstraintMode, Decomposition, ShiftMatrix};
use crate::numkit::DEFAULT_RCOND;
use crate::trainlab::TrainConfig;

/// Environment variable that replaces every seed in a config.
pub const SEED_ENV: &str = "CNTLORA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_eval: usize,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub method: String,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_rcond")]
    pub rcond: f64,
    /// Shift mode uses `C = c_scale · I`.
    #[serde(default = "default_c_scale")]
    pub c_scale: f64,
    #[serde(default)]
    pub decomp: Decomposition,
    #[serde(default = "default_n_init_samples")]
    pub n_init_samples: usize,
    /// The init samples are split column-wise into this many batches.
    #[serde(default = "default_n_init_batches")]
    pub n_init_batches: usize,
    #[serde(default)]
    pub normalize_weights: bool,
    /// Seed for random factors (native `A`).
    #[serde(default)]
    pub seed: u64,
}

fn default_rank() -> usize {
    4
}
fn default_alpha() -> f64 {
    8.0
}
fn default_p() -> f64 {
    0.5
}
fn default_rcond() -> f64 {
    DEFAULT_RCOND
}
fn default_c_scale() -> f64 {
    1.0
}
fn default_n_init_samples() -> usize {
    128
}
fn default_n_init_batches() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VasConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Defaults to `rank × n_points`.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub min_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMethod {
    Cnt(CntMode),
    Baseline(BaselineKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CntMode {
    Cross,
    SelfMode,
    Shift,
}

pub const METHODS: [&str; 8] = [
    "cross", "self", "shift", "native", "pissa", "olora", "eva", "corda",
];

impl InitMethod {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "cross" => InitMethod::Cnt(CntMode::Cross),
            "self" => InitMethod::Cnt(CntMode::SelfMode),
            "shift" => InitMethod::Cnt(CntMode::Shift),
            "native" => InitMethod::Baseline(BaselineKind::NativeLora),
            "pissa" => InitMethod::Baseline(BaselineKind::Pissa),
            "olora" => InitMethod::Baseline(BaselineKind::Olora),
            "eva" => InitMethod::Baseline(BaselineKind::Eva),
            "corda" => InitMethod::Baseline(BaselineKind::Corda),
            other => {
                return Err(Error::BadConfig(format!(
                    "init.method: unknown method {other:?}, expected one of {}",
                    METHODS.join("|")
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            InitMethod::Cnt(CntMode::Cross) => "cross",
            InitMethod::Cnt(CntMode::SelfMode) => "self",
            InitMethod::Cnt(CntMode::Shift) => "shift",
            InitMethod::Baseline(k) => k.name(),
        }
    }

    pub fn needs_activations(self) -> bool {
        match self {
            InitMethod::Cnt(_) => true,
            InitMethod::Baseline(k) => k.needs_activations(),
        }
    }
}

impl InitConfig {
    pub fn method(&self) -> Result<InitMethod> {
        InitMethod::parse(&self.method)
    }

    pub fn constraint_mode(&self, mode: CntMode) -> ConstraintMode {
        match mode {
            CntMode::Cross => ConstraintMode::Cross,
            CntMode::SelfMode => ConstraintMode::SelfMode,
            CntMode::Shift => ConstraintMode::Shift(ShiftMatrix::Scaled(self.c_scale)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ToyModelConfig,
    pub data: DataConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub vas: VasConfig,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::BadConfig(e.to_string()))
    }

    /// Reads a config file, applies `key=value` overrides and the seed
    /// environment variable, then validates.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: Value = serde_json::from_str(&text)
            .map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        for (key, value) in overrides {
            apply_override(&mut v, key, value)?;
        }
        let mut cfg = Self::from_value(v)?;
        if let Some(seed) = env_seed()? {
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the model, data, init and training seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.data.seed = seed;
        self.init.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let method = self.init.method()?;
        let i = &self.init;
        if i.rank == 0 {
            return Err(Error::BadConfig("init.rank must be >= 1".into()));
        }
        if !(i.alpha > 0.0 && i.alpha.is_finite()) {
            return Err(Error::BadConfig(format!(
                "init.alpha must be > 0, got {}",
                i.alpha
            )));
        }
        if !(0.0..=1.0).contains(&i.p) {
            return Err(Error::BadConfig(format!(
                "init.p must lie in [0, 1], got {}",
                i.p
            )));
        }
        if !(i.rcond > 0.0 && i.rcond < 1.0) {
            return Err(Error::BadConfig(format!(
                "init.rcond must lie in (0, 1), got {}",
                i.rcond
            )));
        }
        if !i.c_scale.is_finite() {
            return Err(Error::BadConfig("init.c_scale must be finite".into()));
        }
        if method.needs_activations() {
            if i.n_init_samples == 0 {
                return Err(Error::BadConfig("init.n_init_samples must be >= 1".into()));
            }
            if i.n_init_batches == 0 || i.n_init_batches > i.n_init_samples {
                return Err(Error::BadConfig(format!(
                    "init.n_init_batches must lie in [1, n_init_samples], got {}",
                    i.n_init_batches
                )));
            }
        }
        if self.vas.enabled && !matches!(method, InitMethod::Cnt(_)) {
            return Err(Error::BadConfig(format!(
                "vas.enabled needs a cross|self|shift init.method, got {}",
                method.name()
            )));
        }
        if self.data.n_train == 0 {
            return Err(Error::BadConfig("data.n_train must be >= 1".into()));
        }
        if !(self.data.noise_std >= 0.0 && self.data.noise_std.is_finite()) {
            return Err(Error::BadConfig(
                "data.noise_std must be finite and >= 0".into(),
            ));
        }
        let n_points = self.model.dims.len() - 1;
        let max_ranks: Vec<usize> = self.model.dims.windows(2).map(|w| w[0].min(w[1])).collect();
        if !self.vas.enabled {
            if let Some(m) = max_ranks.iter().find(|&&m| m < i.rank) {
                return Err(Error::BadConfig(format!(
                    "init.rank {} exceeds a layer's maximum rank {m}",
                    i.rank
                )));
            }
        } else {
            let budget = self.vas_budget();
            let capacity: usize = max_ranks.iter().sum();
            if budget > capacity || self.vas.min_rank * n_points > budget {
                return Err(Error::BadConfig(format!(
                    "vas.budget {budget} infeasible for capacity {capacity} and min_rank {}",
                    self.vas.min_rank
                )));
            }
        }
        Ok(())
    }

    pub fn vas_budget(&self) -> usize {
        let n_points = self.model.dims.len().saturating_sub(1);
        self.vas
            .budget
            .unwrap_or(crate::vas::default_budget(self.init.rank, n_points))
    }

    /// Errors unless `output_dir` is an existing directory.
    pub fn check_output_dir(&self) -> Result<()> {
        if self.output_dir.is_dir() {
            Ok(())
        } else {
            Err(Error::io(
                &self.output_dir,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "output directory does not exist",
                ),
            ))
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => {
            s.trim().parse().map(Some).map_err(|_| {
                Error::BadConfig(format!("{SEED_ENV}: not an unsigned integer: {s:?}"))
            })
        }
        Err(_) => Ok(None),
    }
}

/// Sets a dotted key such as `init.method` inside a JSON tree. The value is
/// read as JSON when it parses, otherwise as a plain string.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::BadConfig(format!("bad override key {key:?}")));
        }
        let obj = match node {
            Value::Object(m) => m,
            _ => {
                return Err(Error::BadConfig(format!(
                    "override {key}: {part} is not inside an object"
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_owned(), value);
            return Ok(());
        }
        node = obj
            .entry((*part).to_owned())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => Err(Error::BadConfig(format!("expected key=value, got {s:?}"))),
    }
}
