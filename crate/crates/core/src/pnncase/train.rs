use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, loss_and_grad_with_levels, Batch, Levels, LossKind};
use super::model::{Gradient, PnnModel};
use super::synth::SynthData;
use crate::calib::ece;
use crate::error::{Result, UqError};
use crate::scores::sharpness;
use crate::uqcore::{validate, EvalDataset, PredictionSet, ProbGrid};

/// Random substreams derived from one seed.
pub(crate) mod stream {
    pub const DATA: u64 = 0;
    pub const INIT: u64 = 1;
    pub const TRAIN_LEVELS: u64 = 2;
    pub const VAL_LEVELS: u64 = 3;
    pub const ADV_GROUPS: u64 = 4;
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub n_sampled_probs: usize,
    /// Draw new levels every epoch instead of fixing them once.
    pub resample_probs: bool,
    pub optimizer: Optimizer,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossKind, seed: u64) -> Self {
        TrainConfig {
            loss,
            learning_rate: 1e-3,
            epochs: 2000,
            n_sampled_probs: 30,
            resample_probs: true,
            optimizer: Optimizer::adam(),
            hidden: PnnModel::HIDDEN.to_vec(),
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(UqError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.n_sampled_probs == 0 {
            return Err(UqError::Config("need at least one sampled probability level".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(UqError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record. Entry `e` describes the parameters before the
/// `e`-th update; `best_epoch` indexes the snapshot that was returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub test_ece: Vec<f64>,
    pub test_sharpness: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub gt_sharpness: f64,
}

impl TrainingCurves {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }
}

enum OptState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl OptState {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam { beta1, beta2, eps } => OptState::Adam {
                beta1,
                beta2,
                eps,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, model: &mut PnnModel, grad: &Gradient, lr: f64) {
        match self {
            OptState::Sgd => {
                for (p, g) in model.params_mut().zip(grad.params()) {
                    *p -= lr * g;
                }
            }
            OptState::Adam {
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (((p, g), mi), vi) in model.params_mut().zip(grad.params()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = *beta1 * *mi + (1.0 - *beta1) * g;
                    *vi = *beta2 * *vi + (1.0 - *beta2) * g * g;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// Gaussian predictions of `model` at every input of `data`.
pub fn predict(model: &PnnModel, data: &EvalDataset<f64>) -> Result<PredictionSet<f64>> {
    let batch = Batch::from_dataset(data);
    let cache = model.forward_batch(batch.view());
    let preds = PredictionSet::new(cache.means(), cache.stddevs());
    if let Some(i) = preds
        .means()
        .iter()
        .zip(preds.stddevs())
        .position(|(m, s)| !m.is_finite() || !(s.is_finite() && *s > 0.0))
    {
        return Err(UqError::Numeric(format!("non-finite network output at point {i}")));
    }
    Ok(preds)
}

/// Full-batch training with backtracking to the lowest validation loss.
pub fn train(data: &SynthData, cfg: &TrainConfig) -> Result<(PnnModel, TrainingCurves)> {
    cfg.check()?;
    let input_dim = data.train.data.inputs().first().map_or(0, Vec::len);
    if input_dim == 0 {
        return Err(UqError::EmptyInput("training split has no input features".into()));
    }
    let mut model = PnnModel::init(input_dim, &cfg.hidden, &mut substream(cfg.seed, stream::INIT));
    let mut train_levels_rng = substream(cfg.seed, stream::TRAIN_LEVELS);
    let mut val_levels_rng = substream(cfg.seed, stream::VAL_LEVELS);
    let train_batch = Batch::from_dataset(&data.train.data);
    let val_batch = Batch::from_dataset(&data.val.data);
    let grid = ProbGrid::default();
    let gt_sharpness = sharpness(&validate(&data.test.truth, &data.test.data)?)?;

    let mut curves = TrainingCurves {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        test_ece: Vec::with_capacity(cfg.epochs),
        test_sharpness: Vec::with_capacity(cfg.epochs),
        best_epoch: None,
        gt_sharpness,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut opt = OptState::new(cfg.optimizer, model.n_params());

    let draw = |rng: &mut ChaCha8Rng| -> Result<Levels> {
        if cfg.loss.uses_levels() {
            Levels::sample(cfg.n_sampled_probs, rng)
        } else {
            Ok(Levels::empty())
        }
    };
    let mut train_levels = draw(&mut train_levels_rng)?;
    let mut val_levels = draw(&mut val_levels_rng)?;

    for epoch in 0..cfg.epochs {
        if cfg.resample_probs && epoch > 0 && cfg.loss.uses_levels() {
            train_levels = draw(&mut train_levels_rng)?;
            val_levels = draw(&mut val_levels_rng)?;
        }
        let at_epoch = |e: UqError| UqError::Numeric(format!("epoch {epoch}: {e}"));
        let (train_loss, grad) =
            loss_and_grad_with_levels(&model, &train_batch, cfg.loss, &train_levels).map_err(at_epoch)?;
        let val_loss = batch_loss(&model, &val_batch, cfg.loss, &val_levels).map_err(at_epoch)?;
        let test_preds = predict(&model, &data.test.data).map_err(at_epoch)?;
        let pair = validate(&test_preds, &data.test.data).map_err(at_epoch)?;
        curves.train_loss.push(train_loss);
        curves.val_loss.push(val_loss);
        curves.test_ece.push(ece(&pair, &grid)?);
        curves.test_sharpness.push(sharpness(&pair)?);
        if val_loss < best_val {
            best_val = val_loss;
            best.clone_from(&model);
            curves.best_epoch = Some(epoch);
        }
        opt.step(&mut model, &grad, cfg.learning_rate);
        if !model.all_finite() {
            return Err(UqError::Numeric(format!("parameters diverged at epoch {epoch}")));
        }
    }
    Ok((best, curves))
}
