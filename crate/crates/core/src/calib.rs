//! Calibration metrics: observed proportions, calibration curves, ECE,
//! calibration within prescribed groups and the sampled adversarial-group
//! proxy.
//!
//! Coverage uses `y <= quantile`; a target sitting exactly on its predicted
//! quantile counts as covered.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::real::{compensated_sum, mean_and_stderr, Real};
use crate::uqcore::{std_normal_quantile, Checked, ProbGrid, QuantilePredictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve<T> {
    pub expected: ProbGrid<T>,
    pub observed: Vec<T>,
}

impl<T: Real> CalibrationCurve<T> {
    /// Mean absolute gap between observed and expected proportions.
    pub fn ece(&self) -> T {
        let n = T::from_count(self.observed.len());
        compensated_sum(
            self.observed
                .iter()
                .zip(self.expected.probs())
                .map(|(&o, &p)| (o - p).abs()),
        ) / n
    }
}

/// Index groups over a dataset, one list per group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    groups: Vec<Vec<usize>>,
}

impl GroupSpec {
    /// Checks that every group is non-empty and every index is below
    /// `n_points`.
    pub fn new(groups: Vec<Vec<usize>>, n_points: usize) -> Result<Self> {
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(UqError::EmptyInput(format!("group {g} has no members")));
            }
            if let Some(&bad) = members.iter().find(|&&i| i >= n_points) {
                return Err(UqError::InvalidArgument(format!(
                    "group {g} references index {bad}, dataset has {n_points} points"
                )));
            }
        }
        Ok(GroupSpec { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvGroupCurve<T> {
    pub group_fractions: Vec<T>,
    pub mean_worst_ece: Vec<T>,
    pub stderr: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvGroupConfig {
    /// Number of equi-spaced group fractions between `min_fraction` and 1.
    pub n_sizes: usize,
    /// Random groups per replicate; also the number of replicates.
    pub n_draws: usize,
    pub min_fraction: f64,
}

impl Default for AdvGroupConfig {
    fn default() -> Self {
        AdvGroupConfig {
            n_sizes: 10,
            n_draws: 20,
            min_fraction: 0.01,
        }
    }
}

/// For every point, the index of the first grid level whose quantile covers
/// the target (`grid.len()` when no level does). Because quantiles are
/// monotone in the level, a point is covered exactly at levels at or above
/// this index, so group-restricted curves reduce to integer histograms.
#[derive(Debug, Clone)]
pub struct CoverageTable<T> {
    grid: ProbGrid<T>,
    first_covered: Vec<usize>,
}

impl<T: Real> CoverageTable<T> {
    pub fn build<P>(pred: &P, targets: &[T], grid: &ProbGrid<T>) -> Result<Self>
    where
        P: QuantilePredictor<T> + ?Sized,
    {
        if pred.n_points() != targets.len() {
            return Err(UqError::Shape {
                what: "predictions vs targets",
                left: pred.n_points(),
                right: targets.len(),
            });
        }
        let m = grid.len();
        let mut first_covered = vec![m; targets.len()];
        // Walk levels from the top so that "still covered" runs downward.
        let mut open = vec![true; targets.len()];
        for (j, &p) in grid.probs().iter().enumerate().rev() {
            let q = pred.quantiles_at(p)?;
            for (i, (&y, &qi)) in targets.iter().zip(&q).enumerate() {
                let covered = y <= qi;
                if covered {
                    if !open[i] {
                        return Err(UqError::Numeric(format!(
                            "quantiles of point {i} are not monotone in the level"
                        )));
                    }
                    first_covered[i] = j;
                } else {
                    open[i] = false;
                }
            }
        }
        Ok(CoverageTable {
            grid: grid.clone(),
            first_covered,
        })
    }

    pub fn grid(&self) -> &ProbGrid<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.first_covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_covered.is_empty()
    }

    fn counts(&self, members: impl Iterator<Item = usize>) -> (Vec<usize>, usize) {
        let m = self.grid.len();
        let mut hist = vec![0usize; m + 1];
        let mut n = 0;
        for i in members {
            hist[self.first_covered[i]] += 1;
            n += 1;
        }
        let mut running = 0;
        let cum = hist[..m]
            .iter()
            .map(|&h| {
                running += h;
                running
            })
            .collect();
        (cum, n)
    }

    /// Calibration curve restricted to `members`.
    pub fn curve_of(&self, members: &[usize]) -> Result<CalibrationCurve<T>> {
        if members.is_empty() {
            return Err(UqError::EmptyInput("calibration of an empty group".into()));
        }
        let (cum, n) = self.counts(members.iter().copied());
        let n = T::from_count(n);
        Ok(CalibrationCurve {
            expected: self.grid.clone(),
            observed: cum.into_iter().map(|c| T::from_count(c) / n).collect(),
        })
    }

    pub fn curve(&self) -> Result<CalibrationCurve<T>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.curve_of(&all)
    }

    pub fn ece_of(&self, members: &[usize]) -> Result<T> {
        Ok(self.curve_of(members)?.ece())
    }

    pub fn ece(&self) -> Result<T> {
        Ok(self.curve()?.ece())
    }
}

/// Fraction of targets at or below their predicted `p`-th quantile.
pub fn observed_proportion<T: Real>(pair: &Checked<'_, T>, p: T) -> Result<T> {
    pair.non_empty()?;
    let z = std_normal_quantile(p)?;
    let preds = pair.preds();
    let covered = pair
        .targets()
        .iter()
        .zip(preds.means().iter().zip(preds.stddevs()))
        .filter(|(&y, (&m, &s))| y <= m + s * z)
        .count();
    Ok(T::from_count(covered) / T::from_count(pair.len()))
}

pub fn calibration_curve<T: Real>(pair: &Checked<'_, T>, grid: &ProbGrid<T>) -> Result<CalibrationCurve<T>> {
    pair.non_empty()?;
    CoverageTable::build(pair.preds(), pair.targets(), grid)?.curve()
}

/// Calibration curve of any quantile predictor against `targets`.
pub fn calibration_curve_with<T, P>(pred: &P, targets: &[T], grid: &ProbGrid<T>) -> Result<CalibrationCurve<T>>
where
    T: Real,
    P: QuantilePredictor<T> + ?Sized,
{
    if targets.is_empty() {
        return Err(UqError::EmptyInput("dataset has no points".into()));
    }
    CoverageTable::build(pred, targets, grid)?.curve()
}

pub fn ece<T: Real>(pair: &Checked<'_, T>, grid: &ProbGrid<T>) -> Result<T> {
    Ok(calibration_curve(pair, grid)?.ece())
}

/// ECE restricted to each group, in group order.
pub fn group_ece<T: Real>(pair: &Checked<'_, T>, groups: &GroupSpec, grid: &ProbGrid<T>) -> Result<Vec<T>> {
    pair.non_empty()?;
    let table = CoverageTable::build(pair.preds(), pair.targets(), grid)?;
    groups
        .groups()
        .iter()
        .enumerate()
        .map(|(g, members)| {
            if members.is_empty() {
                return Err(UqError::EmptyInput(format!("group {g} has no members")));
            }
            table.ece_of(members)
        })
        .collect()
}

/// Equi-spaced group fractions from `min_fraction` to 1.
pub fn group_fractions(cfg: &AdvGroupConfig) -> Result<Vec<f64>> {
    if cfg.n_sizes == 0 || cfg.n_draws == 0 {
        return Err(UqError::Config("n_sizes and n_draws must be at least 1".into()));
    }
    if !(cfg.min_fraction > 0.0 && cfg.min_fraction <= 1.0) {
        return Err(UqError::Config(format!(
            "minimum group fraction must lie in (0, 1], got {}",
            cfg.min_fraction
        )));
    }
    if cfg.n_sizes == 1 {
        return Ok(vec![1.0]);
    }
    let span = 1.0 - cfg.min_fraction;
    let last = (cfg.n_sizes - 1) as f64;
    Ok((0..cfg.n_sizes)
        .map(|k| {
            if k + 1 == cfg.n_sizes {
                1.0
            } else {
                cfg.min_fraction + span * k as f64 / last
            }
        })
        .collect())
}

/// Sampled proxy for adversarial group calibration.
///
/// For each group fraction `f`, groups of `round(f * N)` points are drawn
/// uniformly without replacement. One replicate takes the worst ECE over
/// `n_draws` groups; `n_draws` independent replicates give the reported mean
/// and standard error of that worst value.
pub fn adversarial_group_calibration<T, R>(
    pair: &Checked<'_, T>,
    grid: &ProbGrid<T>,
    cfg: &AdvGroupConfig,
    rng: &mut R,
) -> Result<AdvGroupCurve<T>>
where
    T: Real,
    R: Rng + ?Sized,
{
    pair.non_empty()?;
    let table = CoverageTable::build(pair.preds(), pair.targets(), grid)?;
    adversarial_group_calibration_with(&table, cfg, rng)
}

/// [`adversarial_group_calibration`] over a prebuilt coverage table.
pub fn adversarial_group_calibration_with<T, R>(
    table: &CoverageTable<T>,
    cfg: &AdvGroupConfig,
    rng: &mut R,
) -> Result<AdvGroupCurve<T>>
where
    T: Real,
    R: Rng + ?Sized,
{
    let n = table.len();
    let fractions = group_fractions(cfg)?;
    let mut curve = AdvGroupCurve {
        group_fractions: Vec::with_capacity(fractions.len()),
        mean_worst_ece: Vec::with_capacity(fractions.len()),
        stderr: Vec::with_capacity(fractions.len()),
    };
    let mut members = Vec::new();
    for &f in &fractions {
        let size = (f * n as f64).round() as usize;
        if size == 0 {
            return Err(UqError::Config(format!(
                "group fraction {f} of {n} points yields an empty group"
            )));
        }
        let mut worst = Vec::with_capacity(cfg.n_draws);
        for _ in 0..cfg.n_draws {
            let mut max = T::zero();
            for _ in 0..cfg.n_draws {
                members.clear();
                members.extend(index::sample(rng, n, size));
                let e = table.ece_of(&members)?;
                if e > max {
                    max = e;
                }
            }
            worst.push(max);
        }
        let (m, se) = mean_and_stderr(&worst).expect("n_draws >= 1");
        curve.group_fractions.push(T::lit(f));
        curve.mean_worst_ece.push(m);
        curve.stderr.push(se);
    }
    Ok(curve)
}
