//! Isotonic recalibration of average calibration.
//!
//! The map `g` is the pool-adjacent-violators fit of observed on expected
//! proportions, extended with the knots (0, 0) and (1, 1). The recalibrated
//! CDF is `g(F(y))`, so the recalibrated `p`-th quantile is the model's
//! quantile at `g^-1(p)`, with `g^-1(p) = inf { u : g(u) >= p }`.

use serde::{Deserialize, Serialize};

use crate::calib::{calibration_curve, CoverageTable};
use crate::error::{Result, UqError};
use crate::real::Real;
use crate::scores::{check_score_with, interval_score_with, metric_report, MetricReport};
use crate::uqcore::{Checked, PredictionSet, ProbGrid, QuantilePredictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapKnots<T>", bound(deserialize = "T: Real"))]
pub struct RecalibrationMap<T> {
    knots_x: Vec<T>,
    knots_y: Vec<T>,
}

#[derive(Deserialize)]
struct MapKnots<T> {
    knots_x: Vec<T>,
    knots_y: Vec<T>,
}

impl<T: Real> TryFrom<MapKnots<T>> for RecalibrationMap<T> {
    type Error = UqError;

    fn try_from(k: MapKnots<T>) -> Result<Self> {
        RecalibrationMap::from_knots(k.knots_x, k.knots_y)
    }
}

impl<T: Real> RecalibrationMap<T> {
    /// Builds a map from explicit knots, checking every invariant.
    pub fn from_knots(knots_x: Vec<T>, knots_y: Vec<T>) -> Result<Self> {
        if knots_x.len() != knots_y.len() {
            return Err(UqError::Shape {
                what: "knots_x vs knots_y",
                left: knots_x.len(),
                right: knots_y.len(),
            });
        }
        if knots_x.len() < 2 {
            return Err(UqError::InvalidArgument("a map needs at least two knots".into()));
        }
        let unit = |v: &T| *v >= T::zero() && *v <= T::one();
        if !knots_x.iter().chain(&knots_y).all(unit) {
            return Err(UqError::InvalidArgument("knots must lie in [0, 1]".into()));
        }
        if knots_x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(UqError::InvalidArgument("knots_x must be strictly increasing".into()));
        }
        if knots_y.windows(2).any(|w| w[0] > w[1]) {
            return Err(UqError::InvalidArgument("knots_y must be nondecreasing".into()));
        }
        if knots_x[0] != T::zero() || knots_y[0] != T::zero() {
            return Err(UqError::InvalidArgument("first knot must be (0, 0)".into()));
        }
        let last = knots_x.len() - 1;
        if knots_x[last] != T::one() || knots_y[last] != T::one() {
            return Err(UqError::InvalidArgument("last knot must be (1, 1)".into()));
        }
        Ok(RecalibrationMap { knots_x, knots_y })
    }

    pub fn identity() -> Self {
        RecalibrationMap {
            knots_x: vec![T::zero(), T::one()],
            knots_y: vec![T::zero(), T::one()],
        }
    }

    pub fn knots_x(&self) -> &[T] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[T] {
        &self.knots_y
    }

    /// Evaluates `g(p)` by linear interpolation between knots.
    pub fn apply(&self, p: T) -> Result<T> {
        check_unit(p)?;
        // index of the first knot with x >= p
        let k = self.knots_x.partition_point(|&x| x < p);
        if k == 0 {
            return Ok(self.knots_y[0]);
        }
        if k == self.knots_x.len() {
            return Ok(self.knots_y[k - 1]);
        }
        let (xa, xb) = (self.knots_x[k - 1], self.knots_x[k]);
        let (ya, yb) = (self.knots_y[k - 1], self.knots_y[k]);
        if self.knots_x[k] == p {
            return Ok(yb);
        }
        if xa == ya && xb == yb {
            return Ok(p);
        }
        Ok(ya + (yb - ya) * ((p - xa) / (xb - xa)))
    }

    /// Generalized inverse `inf { u : g(u) >= p }`.
    pub fn inverse(&self, p: T) -> Result<T> {
        check_unit(p)?;
        let k = self.knots_y.partition_point(|&y| y < p);
        if k == 0 {
            return Ok(self.knots_x[0]);
        }
        if k == self.knots_y.len() {
            return Ok(self.knots_x[k - 1]);
        }
        let (xa, xb) = (self.knots_x[k - 1], self.knots_x[k]);
        let (ya, yb) = (self.knots_y[k - 1], self.knots_y[k]);
        if yb == p {
            return Ok(xb);
        }
        if xa == ya && xb == yb {
            return Ok(p);
        }
        // ya < p < yb, so the segment has positive slope
        Ok(xa + (xb - xa) * ((p - ya) / (yb - ya)))
    }
}

fn check_unit<T: Real>(p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(UqError::InvalidArgument(format!("probability must lie in [0, 1], got {p}")))
    }
}

/// Equal-weight pool-adjacent-violators: the L2 projection of `values` onto
/// nondecreasing sequences.
pub fn pava<T: Real>(values: &[T]) -> Vec<T> {
    // (block mean, block length)
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            let merged = (m1 * T::from_count(n1) + m2 * T::from_count(n2)) / T::from_count(n);
            *blocks.last_mut().unwrap() = (merged, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Fits the isotonic map of `observed` on `expected` proportions.
///
/// `expected` must be strictly increasing inside (0, 1); the boundary knots
/// are added by the fit.
pub fn fit_isotonic<T: Real>(expected: &[T], observed: &[T]) -> Result<RecalibrationMap<T>> {
    if expected.len() != observed.len() {
        return Err(UqError::Shape {
            what: "expected vs observed",
            left: expected.len(),
            right: observed.len(),
        });
    }
    if expected.len() < 2 {
        return Err(UqError::InvalidArgument("isotonic fit needs at least two points".into()));
    }
    if expected.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(UqError::InvalidArgument("expected proportions must be strictly increasing".into()));
    }
    if !(expected[0] > T::zero() && expected[expected.len() - 1] < T::one()) {
        return Err(UqError::InvalidArgument("expected proportions must lie in (0, 1)".into()));
    }
    if observed.iter().any(|&o| !(o >= T::zero() && o <= T::one())) {
        return Err(UqError::InvalidArgument("observed proportions must lie in [0, 1]".into()));
    }
    let fitted = pava(observed);
    let mut knots_x = Vec::with_capacity(expected.len() + 2);
    let mut knots_y = Vec::with_capacity(expected.len() + 2);
    knots_x.push(T::zero());
    knots_y.push(T::zero());
    knots_x.extend_from_slice(expected);
    knots_y.extend(fitted);
    knots_x.push(T::one());
    knots_y.push(T::one());
    Ok(RecalibrationMap { knots_x, knots_y })
}

/// A Gaussian prediction set viewed through a recalibration map.
#[derive(Debug, Clone, Copy)]
pub struct Recalibrated<'a, T> {
    preds: &'a PredictionSet<T>,
    map: &'a RecalibrationMap<T>,
}

impl<'a, T: Real> Recalibrated<'a, T> {
    pub fn new(preds: &'a PredictionSet<T>, map: &'a RecalibrationMap<T>) -> Self {
        Recalibrated { preds, map }
    }

    /// Model level whose quantile is the recalibrated `p`-th quantile, kept
    /// inside the open unit interval.
    pub fn source_level(&self, p: T) -> Result<T> {
        let u = self.map.inverse(p)?;
        let eps = T::epsilon();
        Ok(u.max(eps).min(T::one() - eps))
    }
}

impl<T: Real> QuantilePredictor<T> for Recalibrated<'_, T> {
    fn n_points(&self) -> usize {
        self.preds.len()
    }

    fn quantiles_at(&self, p: T) -> Result<Vec<T>> {
        self.preds.quantiles_at(self.source_level(p)?)
    }
}

/// Per-point quantiles at every level of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable<T> {
    grid: ProbGrid<T>,
    /// `rows[i][j]` is point `i`'s quantile at `grid.probs()[j]`.
    rows: Vec<Vec<T>>,
}

impl<T: Real> QuantileTable<T> {
    pub fn from_predictor<P: QuantilePredictor<T> + ?Sized>(pred: &P, grid: &ProbGrid<T>) -> Result<Self> {
        let mut rows = vec![Vec::with_capacity(grid.len()); pred.n_points()];
        for &p in grid.probs() {
            for (row, q) in rows.iter_mut().zip(pred.quantiles_at(p)?) {
                row.push(q);
            }
        }
        Ok(QuantileTable {
            grid: grid.clone(),
            rows,
        })
    }

    pub fn grid(&self) -> &ProbGrid<T> {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }
}

impl<T: Real> QuantilePredictor<T> for QuantileTable<T> {
    fn n_points(&self) -> usize {
        self.rows.len()
    }

    /// Only levels that are exactly on the grid are available.
    fn quantiles_at(&self, p: T) -> Result<Vec<T>> {
        let j = self
            .grid
            .probs()
            .iter()
            .position(|&g| g == p)
            .ok_or_else(|| UqError::InvalidArgument(format!("level {p} is not on the quantile table's grid")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn recalibrate_quantiles<T: Real>(
    preds: &PredictionSet<T>,
    map: &RecalibrationMap<T>,
    grid: &ProbGrid<T>,
) -> Result<QuantileTable<T>> {
    QuantileTable::from_predictor(&Recalibrated::new(preds, map), grid)
}

/// Report of `pair` after recalibration with `map`. Quantile-based metrics
/// are recomputed; rmse and mae are unchanged by construction; nll, crps and
/// sharpness are carried over from the Gaussian.
pub fn recalibrated_report<T: Real>(
    pair: &Checked<'_, T>,
    map: &RecalibrationMap<T>,
    grid: &ProbGrid<T>,
) -> Result<MetricReport<T>> {
    let base = metric_report(pair, grid, None)?;
    let rc = Recalibrated::new(pair.preds(), map);
    let curve = CoverageTable::build(&rc, pair.targets(), grid)?.curve()?;
    Ok(MetricReport {
        ece: curve.ece(),
        check: check_score_with(&rc, pair.targets(), grid)?,
        interval: interval_score_with(&rc, pair.targets(), grid)?,
        calibration_curve: curve,
        recalibrated: true,
        ..base
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct RecalibrationOutcome<T> {
    pub map: RecalibrationMap<T>,
    pub test_quantiles: QuantileTable<T>,
    pub before: MetricReport<T>,
    pub after: MetricReport<T>,
}

/// Fits the map on the recalibration pair and evaluates the test pair before
/// and after applying it.
pub fn recalibration_pipeline<T: Real>(
    recal: &Checked<'_, T>,
    test: &Checked<'_, T>,
    grid: &ProbGrid<T>,
) -> Result<RecalibrationOutcome<T>> {
    let curve = calibration_curve(recal, grid)?;
    let map = fit_isotonic(grid.probs(), &curve.observed)?;
    let test_quantiles = recalibrate_quantiles(test.preds(), &map, grid)?;
    let before = metric_report(test, grid, None)?;
    let after = recalibrated_report(test, &map, grid)?;
    Ok(RecalibrationOutcome {
        map,
        test_quantiles,
        before,
        after,
    })
}
