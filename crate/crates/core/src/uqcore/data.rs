use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gaussian::std_normal_quantile;
use crate::error::{Result, UqError};
use crate::real::Real;

/// Per-point Gaussian predictive distributions.
///
/// Construction does not check invariants; [`validate`] is the gate every
/// metric goes through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet<T> {
    means: Vec<T>,
    stddevs: Vec<T>,
}

impl<T: Real> PredictionSet<T> {
    pub fn new(means: Vec<T>, stddevs: Vec<T>) -> Self {
        PredictionSet { means, stddevs }
    }

    /// Same standard deviation at every point.
    pub fn homoscedastic(means: Vec<T>, stddev: T) -> Self {
        let stddevs = vec![stddev; means.len()];
        PredictionSet { means, stddevs }
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn stddevs(&self) -> &[T] {
        &self.stddevs
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        PredictionSet {
            means: indices.iter().map(|&i| self.means[i]).collect(),
            stddevs: indices.iter().map(|&i| self.stddevs[i]).collect(),
        }
    }

    /// Applies `f` to every (mean, stddev) pair.
    pub fn map(&self, mut f: impl FnMut(T, T) -> (T, T)) -> Self {
        let (means, stddevs) = self
            .means
            .iter()
            .zip(&self.stddevs)
            .map(|(&m, &s)| f(m, s))
            .unzip();
        PredictionSet { means, stddevs }
    }

    fn check(&self) -> Result<()> {
        if self.means.len() != self.stddevs.len() {
            return Err(UqError::Shape {
                what: "means vs stddevs",
                left: self.means.len(),
                right: self.stddevs.len(),
            });
        }
        for (i, (&m, &s)) in self.means.iter().zip(&self.stddevs).enumerate() {
            if !m.is_finite() {
                return Err(UqError::Validation {
                    index: i,
                    reason: format!("predicted mean {m} is not finite"),
                });
            }
            if !(s.is_finite() && s > T::zero()) {
                return Err(UqError::Validation {
                    index: i,
                    reason: format!("predicted standard deviation {s} must be positive and finite"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    Recalibration,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Recalibration => "recalibration",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "recalibration" => Ok(Split::Recalibration),
            other => Err(UqError::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Inputs paired with scalar targets, tagged with the split they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset<T> {
    inputs: Vec<Vec<T>>,
    targets: Vec<T>,
    split: Split,
}

impl<T: Real> EvalDataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<T>, split: Split) -> Self {
        EvalDataset {
            inputs,
            targets,
            split,
        }
    }

    /// Dataset without input features (every input vector empty).
    pub fn from_targets(targets: Vec<T>, split: Split) -> Self {
        let inputs = vec![Vec::new(); targets.len()];
        EvalDataset {
            inputs,
            targets,
            split,
        }
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        EvalDataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            split: self.split,
        }
    }

    fn check(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(UqError::Shape {
                what: "inputs vs targets",
                left: self.inputs.len(),
                right: self.targets.len(),
            });
        }
        for (i, (x, &y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if !y.is_finite() {
                return Err(UqError::Validation {
                    index: i,
                    reason: format!("target {y} is not finite"),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(UqError::Validation {
                    index: i,
                    reason: "input vector contains a non-finite value".into(),
                });
            }
        }
        Ok(())
    }
}

/// Strictly increasing expected probabilities in the open unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbGrid<T> {
    probs: Vec<T>,
}

impl<T: Real> ProbGrid<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(UqError::EmptyInput("probability grid".into()));
        }
        if let Some(i) = probs.iter().position(|&p| !(p > T::zero() && p < T::one())) {
            return Err(UqError::InvalidArgument(format!(
                "grid value {} at position {i} is outside (0, 1)",
                probs[i]
            )));
        }
        if let Some(i) = probs.windows(2).position(|w| w[0] >= w[1]) {
            return Err(UqError::InvalidArgument(format!(
                "grid is not strictly increasing at position {}",
                i + 1
            )));
        }
        Ok(ProbGrid { probs })
    }

    /// Levels `step, 2 step, ...` strictly below 1. When `1/step` is an
    /// integer `n` the levels are computed as `k / n` so that e.g. the
    /// default grid contains the exact doubles nearest to 0.01, ..., 0.99.
    pub fn with_step(step: T) -> Result<Self> {
        if !(step > T::zero() && step < T::one()) {
            return Err(UqError::InvalidArgument(format!("grid step must lie in (0, 1), got {step}")));
        }
        let n = (T::one() / step).round();
        let probs = if ((n * step) - T::one()).abs() <= T::lit(1e-9) {
            let n = n.to_usize().expect("grid size");
            (1..n).map(|k| T::from_count(k) / T::from_count(n)).collect()
        } else {
            (1..)
                .map(|k| T::from_count(k) * step)
                .take_while(|&p| p < T::one())
                .collect()
        };
        ProbGrid::new(probs)
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl<T: Real> Default for ProbGrid<T> {
    /// The 99 levels 0.01, 0.02, ..., 0.99.
    fn default() -> Self {
        ProbGrid::with_step(T::lit(0.01)).expect("default grid is valid")
    }
}

/// A prediction set and dataset that passed [`validate`].
#[derive(Debug, Clone, Copy)]
pub struct Checked<'a, T> {
    preds: &'a PredictionSet<T>,
    data: &'a EvalDataset<T>,
}

impl<'a, T: Real> Checked<'a, T> {
    pub fn preds(&self) -> &'a PredictionSet<T> {
        self.preds
    }

    pub fn data(&self) -> &'a EvalDataset<T> {
        self.data
    }

    pub fn targets(&self) -> &'a [T] {
        self.data.targets()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(UqError::EmptyInput("dataset has no points".into()))
        } else {
            Ok(())
        }
    }
}

/// Checks lengths and per-point invariants of a prediction/data pair.
pub fn validate<'a, T: Real>(
    preds: &'a PredictionSet<T>,
    data: &'a EvalDataset<T>,
) -> Result<Checked<'a, T>> {
    preds.check()?;
    if preds.len() != data.len() {
        return Err(UqError::Shape {
            what: "predictions vs targets",
            left: preds.len(),
            right: data.len(),
        });
    }
    data.check()?;
    Ok(Checked { preds, data })
}

/// Anything that can report per-point quantiles at an arbitrary level.
///
/// Quantiles must be nondecreasing in `p` for every point.
pub trait QuantilePredictor<T: Real> {
    fn n_points(&self) -> usize;

    /// Quantile of every point at level `p`, in point order.
    fn quantiles_at(&self, p: T) -> Result<Vec<T>>;
}

impl<T: Real> QuantilePredictor<T> for PredictionSet<T> {
    fn n_points(&self) -> usize {
        self.len()
    }

    fn quantiles_at(&self, p: T) -> Result<Vec<T>> {
        let z = std_normal_quantile(p)?;
        Ok(self
            .means
            .iter()
            .zip(&self.stddevs)
            .map(|(&m, &s)| m + s * z)
            .collect())
    }
}
