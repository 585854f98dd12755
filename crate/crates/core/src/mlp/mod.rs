//! From-scratch feed-forward networks: configuration, initialisation,
//! forward/backward passes, and losses. Training lives in [`train`],
//! hyperparameter search in [`search`], checkpoints in [`checkpoint`].

mod checkpoint;
mod search;
mod train;

pub use checkpoint::{load_mlp, save_mlp, MLP_MAGIC};
pub use search::{quality_filter, percentile_interpolated, sample_hyperparams, SearchSpace};
pub use train::{
    train, BatchMode, EarlyStop, LrSchedule, Optimizer, OptimizerKind, TrainConfig, TrainData,
    TrainRecord,
};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{child_seed, rng_from};
use crate::special::erf;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has {found} columns but the model expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("search space field `{0}` is empty")]
    EmptySearchSpace(&'static str),
    #[error("percentile must lie in (0, 100), got {0}")]
    InvalidPercentile(f64),
    #[error("need at least {need} records, got {n}")]
    TooFewRecords { n: usize, need: usize },
    #[error("failed to access `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// Exact Gaussian-CDF formulation, `x * Phi(x)` with erf.
    Gelu,
    Tanh,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => 0.5 * x * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let phi_cdf = 0.5 * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2));
                let phi_pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
                phi_cdf + x * phi_pdf
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture plus the optimisation hyperparameters drawn with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(MlpError::InvalidConfig("zero input or output dim".into()));
        }
        if self.hidden_layers > 0 && self.width == 0 {
            return Err(MlpError::InvalidConfig("zero hidden width".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MlpError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.weight_decay < 0.0 || !(self.learning_rate > 0.0) {
            return Err(MlpError::InvalidConfig(
                "weight decay must be >= 0 and learning rate > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[fan_in, fan_out]`; forward computes `x . w + b`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// A trained or freshly initialised network. Immutable during inference;
/// safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    config: MlpConfig,
}

/// Per-layer parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Input to each layer (post-activation/dropout of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre_acts: Vec<Array2<f64>>,
    /// Inverted-dropout masks (already scaled by 1/keep), hidden layers only.
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.output.view()
    }
}

impl MlpModel {
    /// Initialise with fan-in-scaled uniform weights: bound
    /// `sqrt(6/fan_in)` for ReLU/GELU, `sqrt(6/(fan_in+fan_out))` for
    /// Tanh. Biases start at zero.
    pub fn init(config: &MlpConfig, seed: u64) -> Result<Self, MlpError> {
        config.validate()?;
        let mut dims = Vec::with_capacity(config.hidden_layers + 2);
        dims.push(config.input_dim);
        for _ in 0..config.hidden_layers {
            dims.push(config.width);
        }
        dims.push(config.output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = match config.activation {
                Activation::Relu | Activation::Gelu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let mut rng = rng_from(child_seed(seed, l as u64));
            let weights = Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            });
            layers.push(Layer {
                weights,
                biases: Array1::zeros(fan_out),
            });
        }
        Ok(MlpModel {
            layers,
            config: config.clone(),
        })
    }

    /// Build a model from explicit parameters (shapes must chain).
    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self, MlpError> {
        config.validate()?;
        let mut expected = config.input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() != expected || layer.weights.ncols() != layer.biases.len() {
                return Err(MlpError::InvalidConfig(format!(
                    "layer {i} shapes do not chain"
                )));
            }
            expected = layer.weights.ncols();
        }
        if expected != config.output_dim {
            return Err(MlpError::InvalidConfig(
                "final layer does not match output_dim".into(),
            ));
        }
        Ok(MlpModel { layers, config })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Deterministic eval-mode forward pass (no dropout).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, MlpError> {
        Ok(self.forward_cached(x, false, 0)?.0)
    }

    /// Forward pass keeping the cache for backprop. In train mode,
    /// inverted dropout with the config's rate follows each hidden
    /// activation; a rate of zero applies no mask at all, so train and
    /// eval outputs coincide exactly.
    pub fn forward_cached(
        &self,
        x: ArrayView2<'_, f64>,
        train_mode: bool,
        dropout_seed: u64,
    ) -> Result<(Array2<f64>, ForwardCache), MlpError> {
        if x.ncols() != self.config.input_dim {
            return Err(MlpError::ShapeMismatch {
                expected: self.config.input_dim,
                found: x.ncols(),
            });
        }
        let n_layers = self.layers.len();
        let rate = self.config.dropout;
        let keep = 1.0 - rate;
        let mut rng = rng_from(dropout_seed);
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut masks = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let mut z = h.dot(&layer.weights);
            z += &layer.biases;
            if l + 1 == n_layers {
                h = z;
            } else {
                pre_acts.push(z.clone());
                let mut a = z.mapv(|v| self.config.activation.apply(v));
                if train_mode && rate > 0.0 {
                    let mask = Array2::from_shape_fn(a.dim(), |_| {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    });
                    a *= &mask;
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
                h = a;
            }
        }
        let cache = ForwardCache {
            inputs,
            pre_acts,
            masks,
            output: h.clone(),
        };
        Ok((h, cache))
    }

    /// Backpropagate `d loss / d output` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<'_, f64>) -> Gradients {
        let n_layers = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(n_layers);
        let mut delta = grad_output.to_owned();
        for l in (0..n_layers).rev() {
            let input = &cache.inputs[l];
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            grads.push(Layer {
                weights: dw,
                biases: db,
            });
            if l > 0 {
                let mut prev = delta.dot(&self.layers[l].weights.t());
                if let Some(mask) = &cache.masks[l - 1] {
                    prev *= mask;
                }
                let z = &cache.pre_acts[l - 1];
                prev.zip_mut_with(z, |g, &zv| *g *= self.config.activation.derivative(zv));
                delta = prev;
            }
        }
        grads.reverse();
        Gradients { layers: grads }
    }
}

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    Mse,
    /// Huber with threshold delta; quadratic below, linear above.
    Huber(f64),
}

impl LossKind {
    /// Huber with the default threshold of 1.0 on normalised targets.
    pub fn huber_default() -> LossKind {
        LossKind::Huber(1.0)
    }
}

/// Mean loss over every entry of the batch.
pub fn loss_value(kind: LossKind, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    debug_assert_eq!(pred.dim(), target.dim());
    let n = pred.len() as f64;
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        let r = p - t;
        total += match kind {
            LossKind::Mse => r * r,
            LossKind::Huber(delta) => {
                if r.abs() <= delta {
                    0.5 * r * r
                } else {
                    delta * (r.abs() - 0.5 * delta)
                }
            }
        };
    }
    total / n
}

/// Gradient of [`loss_value`] with respect to the predictions.
pub fn loss_grad(
    kind: LossKind,
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let n = pred.len() as f64;
    let mut out = Array2::zeros(pred.raw_dim());
    for ((o, p), t) in out.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let r = p - t;
        *o = match kind {
            LossKind::Mse => 2.0 * r / n,
            LossKind::Huber(delta) => r.clamp(-delta, delta) / n,
        };
    }
    out
}
