use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::uqcore::{EvalDataset, PredictionSet, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub x_low: f64,
    pub x_high: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 200,
            n_val: 100,
            n_test: 100,
            x_low: -10.0,
            x_high: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        SynthConfig {
            seed,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(UqError::Config("split sizes must be positive".into()));
        }
        if !(self.x_low < self.x_high) || !self.x_low.is_finite() || !self.x_high.is_finite() {
            return Err(UqError::Config(format!(
                "input range [{}, {}] is empty",
                self.x_low, self.x_high
            )));
        }
        Ok(())
    }
}

pub fn mean_function(x: f64) -> f64 {
    (x / 2.0).sin() + x * (0.8 * x).cos()
}

/// Noise standard deviation of the four input quadrants.
pub fn noise_sd(x: f64) -> f64 {
    if x < -5.0 {
        1.0
    } else if x < 0.0 {
        0.01
    } else if x < 5.0 {
        1.5
    } else {
        0.5
    }
}

/// One split together with the true predictive distribution at its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub data: EvalDataset<f64>,
    pub truth: PredictionSet<f64>,
}

impl LabeledSplit {
    /// First input feature of every point.
    pub fn xs(&self) -> Vec<f64> {
        self.data.inputs().iter().map(|v| v[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: LabeledSplit,
    pub val: LabeledSplit,
    pub test: LabeledSplit,
}

fn sample_split<R: Rng + ?Sized>(n: usize, cfg: &SynthConfig, split: Split, rng: &mut R) -> LabeledSplit {
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(cfg.x_low..=cfg.x_high);
        let eps: f64 = StandardNormal.sample(rng);
        let (m, s) = (mean_function(x), noise_sd(x));
        inputs.push(vec![x]);
        targets.push(m + s * eps);
        means.push(m);
        sds.push(s);
    }
    LabeledSplit {
        data: EvalDataset::new(inputs, targets, split),
        truth: PredictionSet::new(means, sds),
    }
}

/// Draws the train, validation and test splits in that order.
pub fn generate_synthetic<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthData> {
    cfg.check()?;
    let train = sample_split(cfg.n_train, cfg, Split::Train, rng);
    let val = sample_split(cfg.n_val, cfg, Split::Validation, rng);
    let test = sample_split(cfg.n_test, cfg, Split::Test, rng);
    Ok(SynthData { train, val, test })
}
