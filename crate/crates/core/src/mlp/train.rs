//! Gradient-descent training with Adam/AdamW, LR schedules, early
//! stopping, and best-validation weight restoration.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{loss_grad, loss_value, Gradients, Layer, LossKind, MlpConfig, MlpError, MlpModel};
use crate::rng::{child_seed, rng_from};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Weight decay coupled into the gradient as an L2 term (done by the
    /// training loop before each step).
    Adam,
    /// Weight decay decoupled from the adaptive update.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BatchMode {
    FullBatch,
    Minibatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LrSchedule {
    Constant,
    /// `lr(epoch) = lr0 * gamma^floor((epoch - 1) / step_size)`, epochs
    /// 1-based, so the first decay lands on epoch `step_size + 1`.
    Step { step_size: usize, gamma: f64 },
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Step { step_size, gamma } => {
                base * gamma.powi(((epoch - 1) / step_size) as i32)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            patience: 20,
            min_delta: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub batch_mode: BatchMode,
    pub max_epochs: usize,
    pub early_stop: Option<EarlyStop>,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-batch Adam with MSE, 300-epoch cap, and (20, 1e-7) early
    /// stopping.
    pub fn full_batch_adam(seed: u64) -> TrainConfig {
        TrainConfig {
            loss: LossKind::Mse,
            optimizer: OptimizerKind::Adam,
            batch_mode: BatchMode::FullBatch,
            max_epochs: 300,
            early_stop: Some(EarlyStop::default()),
            lr_schedule: LrSchedule::Constant,
            seed,
        }
    }

    /// Minibatch AdamW with Huber loss, batch 1024, 12 epochs, and the
    /// step-3 / gamma-0.05 schedule.
    pub fn minibatch_adamw(seed: u64) -> TrainConfig {
        TrainConfig {
            loss: LossKind::huber_default(),
            optimizer: OptimizerKind::AdamW,
            batch_mode: BatchMode::Minibatch(1024),
            max_epochs: 12,
            early_stop: Some(EarlyStop {
                patience: 3,
                min_delta: 0.0,
            }),
            lr_schedule: LrSchedule::Step {
                step_size: 3,
                gamma: 0.05,
            },
            seed,
        }
    }
}

/// Training history and restored-model metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// 1-based epoch whose weights were restored (first argmin of the
    /// validation loss).
    pub best_epoch: usize,
    pub restored_best: bool,
    /// RMSE of the restored model on the training split, normalised units.
    pub final_train_rmse: f64,
    pub mlp_config: MlpConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub epochs_run: usize,
}

/// Borrowed train/val matrices.
pub struct TrainData<'a> {
    pub train_x: ArrayView2<'a, f64>,
    pub train_y: ArrayView2<'a, f64>,
    pub val_x: ArrayView2<'a, f64>,
    pub val_y: ArrayView2<'a, f64>,
}

/// Adam/AdamW state over a model's parameters.
///
/// `step` consumes gradients as given: for [`OptimizerKind::Adam`] the
/// caller folds any L2 term into the gradients (so a zero gradient leaves
/// parameters exactly unchanged), while [`OptimizerKind::AdamW`] applies
/// its decoupled decay internally.
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64, model: &MlpModel) -> Optimizer {
        let zeros = |l: &Layer| Layer {
            weights: Array2::zeros(l.weights.raw_dim()),
            biases: ndarray::Array1::zeros(l.biases.len()),
        };
        Optimizer {
            kind,
            weight_decay,
            m: model.layers().iter().map(zeros).collect(),
            v: model.layers().iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        let kind = self.kind;
        let wd = self.weight_decay;
        let update = move |theta: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let mut delta = lr * m_hat / (v_hat.sqrt() + EPSILON);
            if kind == OptimizerKind::AdamW {
                delta += lr * wd * *theta;
            }
            *theta -= delta;
        };
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[l];
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut self.m[l].weights)
                .and(&mut self.v[l].weights)
                .for_each(update);
            ndarray::Zip::from(&mut layer.biases)
                .and(&g.biases)
                .and(&mut self.m[l].biases)
                .and(&mut self.v[l].biases)
                .for_each(update);
        }
    }
}

/// Couple weight decay into gradients as an L2 term (plain Adam path).
fn couple_l2(grads: &mut Gradients, model: &MlpModel, weight_decay: f64) {
    for (g, layer) in grads.layers.iter_mut().zip(model.layers()) {
        g.weights.zip_mut_with(&layer.weights, |gv, &wv| *gv += weight_decay * wv);
        // Biases are conventionally exempt from decay.
    }
}

/// Train a model from scratch. Deterministic in `(data, configs, seeds)`.
///
/// Runs up to `max_epochs`, monitoring validation loss after each epoch;
/// stops early once the validation loss has failed to improve by more
/// than `min_delta` for `patience` consecutive epochs, and always restores
/// the weights of the first validation-loss minimum.
pub fn train(
    data: &TrainData<'_>,
    mlp_cfg: &MlpConfig,
    train_cfg: &TrainConfig,
) -> Result<(MlpModel, TrainRecord), MlpError> {
    if data.train_x.nrows() == 0 {
        return Err(MlpError::EmptySplit("train"));
    }
    if data.val_x.nrows() == 0 {
        return Err(MlpError::EmptySplit("validation"));
    }
    if data.train_x.ncols() != mlp_cfg.input_dim {
        return Err(MlpError::ShapeMismatch {
            expected: mlp_cfg.input_dim,
            found: data.train_x.ncols(),
        });
    }
    if data.train_y.ncols() != mlp_cfg.output_dim {
        return Err(MlpError::ShapeMismatch {
            expected: mlp_cfg.output_dim,
            found: data.train_y.ncols(),
        });
    }
    if train_cfg.max_epochs == 0 {
        return Err(MlpError::InvalidConfig("max_epochs must be >= 1".into()));
    }
    if let Some(es) = &train_cfg.early_stop {
        if es.patience == 0 {
            return Err(MlpError::InvalidConfig("patience must be >= 1".into()));
        }
    }
    if let LrSchedule::Step { step_size, gamma } = train_cfg.lr_schedule {
        if step_size == 0 || !(gamma > 0.0 && gamma <= 1.0) {
            return Err(MlpError::InvalidConfig(
                "step schedule needs step_size >= 1 and gamma in (0, 1]".into(),
            ));
        }
    }

    let seed = train_cfg.seed;
    let mut model = MlpModel::init(mlp_cfg, child_seed(seed, 0))?;
    let mut optimizer = Optimizer::new(train_cfg.optimizer, mlp_cfg.weight_decay, &model);

    let n_train = data.train_x.nrows();
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights: Option<MlpModel> = None;
    let mut stall = 0usize;
    let mut step_counter = 0u64;

    for epoch in 1..=train_cfg.max_epochs {
        let lr = train_cfg.lr_schedule.lr_at(mlp_cfg.learning_rate, epoch);
        let batches: Vec<Vec<usize>> = match train_cfg.batch_mode {
            BatchMode::FullBatch => vec![(0..n_train).collect()],
            BatchMode::Minibatch(size) => {
                let size = size.max(1);
                let mut order: Vec<usize> = (0..n_train).collect();
                let mut rng = rng_from(child_seed(child_seed(seed, 1), epoch as u64));
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
                // Last partial batch is kept.
                order.chunks(size).map(|c| c.to_vec()).collect()
            }
        };

        let mut epoch_loss = 0.0;
        for batch in &batches {
            let (bx, by) = if batch.len() == n_train {
                (data.train_x.to_owned(), data.train_y.to_owned())
            } else {
                (gather(data.train_x, batch), gather(data.train_y, batch))
            };
            step_counter += 1;
            let dropout_seed = child_seed(child_seed(seed, 2), step_counter);
            let (pred, cache) = model.forward_cached(bx.view(), true, dropout_seed)?;
            let batch_loss = loss_value(train_cfg.loss, pred.view(), by.view());
            if !batch_loss.is_finite() {
                return Err(MlpError::NanLoss { epoch });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            let grad_out = loss_grad(train_cfg.loss, pred.view(), by.view());
            let mut grads = model.backward(&cache, grad_out.view());
            if train_cfg.optimizer == OptimizerKind::Adam && mlp_cfg.weight_decay > 0.0 {
                couple_l2(&mut grads, &model, mlp_cfg.weight_decay);
            }
            optimizer.step(&mut model, &grads, lr);
        }
        train_losses.push(epoch_loss / n_train as f64);

        let val_pred = model.forward(data.val_x)?;
        let val_loss = loss_value(train_cfg.loss, val_pred.view(), data.val_y);
        if !val_loss.is_finite() {
            return Err(MlpError::NanLoss { epoch });
        }
        val_losses.push(val_loss);

        // Restoration tracks the strict minimum; patience counts epochs
        // without an improvement larger than min_delta.
        if val_loss < best_val {
            best_weights = Some(model.clone());
            best_epoch = epoch;
        }
        if let Some(es) = &train_cfg.early_stop {
            if best_val - val_loss > es.min_delta {
                stall = 0;
            } else {
                stall += 1;
            }
            best_val = best_val.min(val_loss);
            if stall >= es.patience {
                break;
            }
        } else {
            best_val = best_val.min(val_loss);
        }
    }

    let restored_best = best_weights.is_some();
    if let Some(best) = best_weights {
        model = best;
    }
    let train_pred = model.forward(data.train_x)?;
    let final_train_rmse = loss_value(LossKind::Mse, train_pred.view(), data.train_y).sqrt();
    let epochs_run = val_losses.len();
    let record = TrainRecord {
        train_losses,
        val_losses,
        best_epoch,
        restored_best,
        final_train_rmse,
        mlp_config: mlp_cfg.clone(),
        train_config: train_cfg.clone(),
        seed,
        epochs_run,
    };
    Ok((model, record))
}

fn gather(m: ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}
