//! Training objectives: each is the batch mean of a proper score, with its
//! derivative taken analytically with respect to the mean and log-variance
//! heads and then pulled back through the network.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{input_matrix, Gradient, PnnModel};
use crate::error::{Result, UqError};
use crate::scores::{crps_point, interval_point, nll_point, pinball};
use crate::uqcore::{std_normal_cdf, std_normal_pdf, std_normal_quantile, EvalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Nll,
    Crps,
    Check,
    Interval,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Nll, LossKind::Crps, LossKind::Check, LossKind::Interval];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::Crps => "crps",
            LossKind::Check => "check",
            LossKind::Interval => "interval",
        }
    }

    /// Whether the loss is a sum over sampled probability levels.
    pub fn uses_levels(self) -> bool {
        matches!(self, LossKind::Check | LossKind::Interval)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(LossKind::Nll),
            "crps" => Ok(LossKind::Crps),
            "check" => Ok(LossKind::Check),
            "interval" => Ok(LossKind::Interval),
            other => Err(UqError::InvalidArgument(format!(
                "unknown loss `{other}` (expected nll, crps, check or interval)"
            ))),
        }
    }
}

/// Probability levels of a check or interval loss with their standard
/// normal quantiles precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    probs: Vec<f64>,
    /// `Phi^-1(p)` for check, `(Phi^-1(alpha/2), Phi^-1(1 - alpha/2))` for
    /// interval with `alpha = 1 - p`.
    check_z: Vec<f64>,
    interval_z: Vec<(f64, f64)>,
}

impl Levels {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let check_z = probs.iter().map(|&p| std_normal_quantile(p)).collect::<Result<Vec<_>>>()?;
        let interval_z = probs
            .iter()
            .map(|&p| {
                let alpha = 1.0 - p;
                Ok((std_normal_quantile(0.5 * alpha)?, std_normal_quantile(1.0 - 0.5 * alpha)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Levels {
            probs,
            check_z,
            interval_z,
        })
    }

    pub fn empty() -> Self {
        Levels {
            probs: Vec::new(),
            check_z: Vec::new(),
            interval_z: Vec::new(),
        }
    }

    /// `n` levels drawn uniformly from the open unit interval.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let probs = (0..n)
            .map(|_| loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            })
            .collect();
        Levels::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Score of one point and its partial derivatives with respect to the mean
/// and the log-variance outputs.
pub fn point_loss(kind: LossKind, mu: f64, log_var: f64, y: f64, levels: &Levels) -> (f64, f64, f64) {
    let sigma = (0.5 * log_var).exp();
    match kind {
        LossKind::Nll => {
            let r = y - mu;
            let inv_var = (-log_var).exp();
            (nll_point(mu, sigma, y), -r * inv_var, 0.5 - 0.5 * r * r * inv_var)
        }
        LossKind::Crps => {
            let z = (y - mu) / sigma;
            let d_mu = -(2.0 * std_normal_cdf(z) - 1.0);
            let d_sigma = 2.0 * std_normal_pdf(z) - std::f64::consts::FRAC_2_SQRT_PI / 2.0;
            (crps_point(mu, sigma, y), d_mu, d_sigma * 0.5 * sigma)
        }
        LossKind::Check => {
            let (mut l, mut d_mu, mut d_sigma) = (0.0, 0.0, 0.0);
            for (&p, &z) in levels.probs.iter().zip(&levels.check_z) {
                let u = y - (mu + sigma * z);
                l += pinball(p, u);
                // d rho / d q = -rho'(u)
                let slope = if u >= 0.0 { p } else { p - 1.0 };
                d_mu -= slope;
                d_sigma -= slope * z;
            }
            (l, d_mu, d_sigma * 0.5 * sigma)
        }
        LossKind::Interval => {
            let (mut l, mut d_mu, mut d_sigma) = (0.0, 0.0, 0.0);
            for (&p, &(z_lo, z_hi)) in levels.probs.iter().zip(&levels.interval_z) {
                let alpha = 1.0 - p;
                let lower = mu + sigma * z_lo;
                let upper = mu + sigma * z_hi;
                l += interval_point(lower, upper, y, alpha);
                let mut d_lower = -1.0;
                let mut d_upper = 1.0;
                if y < lower {
                    d_lower += 2.0 / alpha;
                }
                if y > upper {
                    d_upper -= 2.0 / alpha;
                }
                d_mu += d_lower + d_upper;
                d_sigma += d_lower * z_lo + d_upper * z_hi;
            }
            (l, d_mu, d_sigma * 0.5 * sigma)
        }
    }
}

/// Inputs and targets of a full batch in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn from_dataset(data: &EvalDataset<f64>) -> Self {
        Batch {
            inputs: input_matrix(data.inputs()),
            targets: data.targets().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }
}

fn check_levels(kind: LossKind, levels: &Levels) -> Result<()> {
    if kind.uses_levels() && levels.probs.is_empty() {
        return Err(UqError::Config(format!("{kind} loss needs at least one probability level")));
    }
    Ok(())
}

/// Batch-mean loss without gradients.
pub fn batch_loss(model: &PnnModel, batch: &Batch, kind: LossKind, levels: &Levels) -> Result<f64> {
    if batch.is_empty() {
        return Err(UqError::EmptyInput("training batch".into()));
    }
    check_levels(kind, levels)?;
    let cache = model.forward_batch(batch.view());
    let (mu, lv) = (cache.means(), cache.log_variances());
    let total: f64 = batch
        .targets
        .iter()
        .enumerate()
        .map(|(i, &y)| point_loss(kind, mu[i], lv[i], y, levels).0)
        .sum();
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(UqError::Numeric(format!("{kind} loss is not finite")));
    }
    Ok(loss)
}

/// Batch-mean loss and its exact gradient for fixed probability levels.
pub fn loss_and_grad_with_levels(
    model: &PnnModel,
    batch: &Batch,
    kind: LossKind,
    levels: &Levels,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(UqError::EmptyInput("training batch".into()));
    }
    check_levels(kind, levels)?;
    let n = batch.len() as f64;
    let cache = model.forward_batch(batch.view());
    let (mu, lv) = (cache.means(), cache.log_variances());
    let mut d_out = Array2::zeros((batch.len(), 2));
    let mut total = 0.0;
    for (i, &y) in batch.targets.iter().enumerate() {
        let (l, d_mu, d_lv) = point_loss(kind, mu[i], lv[i], y, levels);
        total += l;
        d_out[[i, 0]] = d_mu / n;
        d_out[[i, 1]] = d_lv / n;
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(UqError::Numeric(format!("{kind} loss is not finite")));
    }
    Ok((loss, model.backward(&cache, &d_out)))
}

/// Samples `n_levels` fresh levels for check and interval losses, then
/// evaluates [`loss_and_grad_with_levels`].
pub fn loss_and_grad<R: Rng + ?Sized>(
    model: &PnnModel,
    batch: &Batch,
    kind: LossKind,
    n_levels: usize,
    rng: &mut R,
) -> Result<(f64, Gradient)> {
    let levels = if kind.uses_levels() {
        Levels::sample(n_levels, rng)?
    } else {
        Levels::empty()
    };
    loss_and_grad_with_levels(model, batch, kind, &levels)
}
