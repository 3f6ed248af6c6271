use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// One linear map `dims[0] → dims[1]`.
    Linear,
    /// Two linear maps with a nonlinearity between them.
    Mlp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    None,
    Tanh,
    Relu,
}

impl Nonlinearity {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::None => v,
            Nonlinearity::Tanh => v.tanh(),
            Nonlinearity::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation value.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Nonlinearity::None => 1.0,
            Nonlinearity::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Nonlinearity::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub architecture: Architecture,
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise separating the pretrained
    /// weights from the teacher.
    pub source_perturbation: f64,
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let expected = match self.architecture {
            Architecture::Linear => 2,
            Architecture::Mlp2 => 3,
        };
        if self.dims.len() != expected {
            return Err(Error::BadConfig(format!(
                "model.dims: {:?} architecture needs {expected} widths, got {}",
                self.architecture,
                self.dims.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::BadConfig("model.dims: widths must be >= 1".into()));
        }
        if !(self.source_perturbation >= 0.0 && self.source_perturbation.is_finite()) {
            return Err(Error::BadConfig(format!(
                "model.source_perturbation must be finite and >= 0, got {}",
                self.source_perturbation
            )));
        }
        Ok(())
    }
}

/// A linear layer that can receive an adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachmentPoint {
    pub id: String,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Frozen pretrained weight, `out_dim × in_dim`.
    pub w_src: Matrix,
}

/// Activations entering one attachment point; columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub point_id: String,
    pub x: Matrix,
    pub batch_index: usize,
}

impl AsRef<Matrix> for ActivationBatch {
    fn as_ref(&self) -> &Matrix {
        &self.x
    }
}

/// Inputs (`d₀ × n`) and noisy teacher outputs (`k × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> TaskData {
        TaskData {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
        }
    }
}

/// Seeded teacher–student pair.
///
/// The teacher weights `W*` define the fine-tuning task; the frozen
/// "pretrained" weights are `W_src = W* + σ_w·N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    config: ToyModelConfig,
    points: Vec<AttachmentPoint>,
    teacher: Vec<Matrix>,
}

pub fn build_toy_model(cfg: &ToyModelConfig) -> Result<ToyModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let teacher: Vec<Matrix> = cfg
        .dims
        .windows(2)
        .map(|w| {
            let (d, k) = (w[0], w[1]);
            let std = 1.0 / (d as f64).sqrt();
            gaussian(&mut rng, k, d, std)
        })
        .collect();
    let points = teacher
        .iter()
        .enumerate()
        .map(|(i, w_star)| {
            let noise = gaussian(
                &mut rng,
                w_star.rows(),
                w_star.cols(),
                cfg.source_perturbation,
            );
            AttachmentPoint {
                id: format!("layer{i}"),
                in_dim: w_star.cols(),
                out_dim: w_star.rows(),
                w_src: w_star.add(&noise),
            }
        })
        .collect();
    Ok(ToyModel {
        config: cfg.clone(),
        points,
        teacher,
    })
}

impl ToyModel {
    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn points(&self) -> &[AttachmentPoint] {
        &self.points
    }

    pub fn point(&self, id: &str) -> Option<&AttachmentPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn teacher(&self) -> &[Matrix] {
        &self.teacher
    }

    pub fn input_dim(&self) -> usize {
        self.config.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.config.dims.last().expect("validated dims")
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.config.architecture {
            Architecture::Linear => Nonlinearity::None,
            Architecture::Mlp2 => self.config.nonlinearity,
        }
    }

    /// Same model with the frozen weights replaced, e.g. by residuals left
    /// after moving part of each weight into an adapter.
    pub fn with_source_weights(&self, weights: Vec<Matrix>) -> Result<ToyModel> {
        if weights.len() != self.points.len() {
            return Err(Error::shape(
                "source weights",
                format!("{} matrices", self.points.len()),
                format!("{} matrices", weights.len()),
            ));
        }
        let mut out = self.clone();
        for (p, w) in out.points.iter_mut().zip(weights) {
            if w.shape() != p.w_src.shape() {
                return Err(Error::shape(
                    "source weight",
                    format!("{} for {}", p.w_src.shape_str(), p.id),
                    w.shape_str(),
                ));
            }
            p.w_src = w;
        }
        Ok(out)
    }

    /// Runs the frozen pretrained network and records what each attachment
    /// point's linear map receives.
    pub fn forward_capture(&self, inputs: &Matrix) -> Result<Vec<ActivationBatch>> {
        self.check_input(inputs)?;
        let mut batches = Vec::with_capacity(self.points.len());
        let mut h = inputs.clone();
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                let act = self.nonlinearity();
                h = h.map(|v| act.apply(v));
            }
            batches.push(ActivationBatch {
                point_id: p.id.clone(),
                x: h.clone(),
                batch_index: 0,
            });
            h = p.w_src.dot(&h);
        }
        Ok(batches)
    }

    /// Output of the frozen pretrained network.
    pub fn source_forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let weights: Vec<&Matrix> = self.points.iter().map(|p| &p.w_src).collect();
        Ok(self.forward_with(&weights, inputs))
    }

    /// Output of the teacher network (noise-free targets).
    pub fn teacher_forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let weights: Vec<&Matrix> = self.teacher.iter().collect();
        Ok(self.forward_with(&weights, inputs))
    }

    fn forward_with(&self, weights: &[&Matrix], inputs: &Matrix) -> Matrix {
        let act = self.nonlinearity();
        let mut h = inputs.clone();
        for (i, w) in weights.iter().enumerate() {
            if i > 0 {
                h = h.map(|v| act.apply(v));
            }
            h = w.dot(&h);
        }
        h
    }

    /// Draws `n` standard-normal inputs and their teacher outputs plus
    /// Gaussian label noise.
    pub fn sample_task<R: Rng>(&self, n: usize, noise_std: f64, rng: &mut R) -> TaskData {
        let inputs = gaussian(rng, self.input_dim(), n, 1.0);
        let clean = self
            .teacher_forward(&inputs)
            .expect("inputs drawn with the model's input width");
        let noise = gaussian(rng, clean.rows(), n, noise_std);
        TaskData {
            inputs,
            targets: clean.add(&noise),
        }
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.rows() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("{} input rows", self.input_dim()),
                format!("{} rows", inputs.rows()),
            ));
        }
        Ok(())
    }
}

/// `rows × cols` matrix of i.i.d. `N(0, std²)` draws, row-major order.
pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}
