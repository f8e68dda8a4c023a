//! Accuracy, sharpness and proper scoring rules. Every score is a loss:
//! lower is better.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::calib::{
    adversarial_group_calibration_with, AdvGroupConfig, AdvGroupCurve, CalibrationCurve, CoverageTable,
};
use crate::error::{Result, UqError};
use crate::real::{compensated_sum, Real};
use crate::uqcore::{std_normal_cdf, std_normal_pdf, Checked, ProbGrid, QuantilePredictor};

/// Negative log density of `N(mu, sigma^2)` at `y`.
pub fn nll_point<T: Real>(mu: T, sigma: T, y: T) -> T {
    let z = (y - mu) / sigma;
    let half = T::lit(0.5);
    half * (T::lit(2.0) * T::PI()).ln() + sigma.ln() + half * z * z
}

/// Closed-form CRPS of `N(mu, sigma^2)` against the outcome `y`.
pub fn crps_point<T: Real>(mu: T, sigma: T, y: T) -> T {
    let z = (y - mu) / sigma;
    let two = T::lit(2.0);
    let inv_sqrt_pi = T::FRAC_2_SQRT_PI() / two;
    sigma * (z * (two * std_normal_cdf(z) - T::one()) + two * std_normal_pdf(z) - inv_sqrt_pi)
}

/// Pinball loss `rho_p(u)` of residual `u = y - q`.
pub fn pinball<T: Real>(p: T, residual: T) -> T {
    if residual >= T::zero() {
        p * residual
    } else {
        (p - T::one()) * residual
    }
}

/// Interval score of `[lower, upper]` with miscoverage `alpha`.
pub fn interval_point<T: Real>(lower: T, upper: T, y: T, alpha: T) -> T {
    let penalty = T::lit(2.0) / alpha;
    let mut s = upper - lower;
    if y < lower {
        s = s + penalty * (lower - y);
    }
    if y > upper {
        s = s + penalty * (y - upper);
    }
    s
}

fn residuals<'a, T: Real>(pair: &Checked<'a, T>) -> impl Iterator<Item = T> + 'a {
    let means = pair.preds().means();
    pair.targets().iter().zip(means).map(|(&y, &m)| y - m)
}

fn per_point_mean<T: Real>(pair: &Checked<'_, T>, f: impl Fn(T, T, T) -> T) -> Result<T> {
    pair.non_empty()?;
    let p = pair.preds();
    let s = compensated_sum(
        p.means()
            .iter()
            .zip(p.stddevs())
            .zip(pair.targets())
            .map(|((&m, &sd), &y)| f(m, sd, y)),
    );
    Ok(s / T::from_count(pair.len()))
}

pub fn rmse<T: Real>(pair: &Checked<'_, T>) -> Result<T> {
    pair.non_empty()?;
    let ss = compensated_sum(residuals(pair).map(|r| r * r));
    Ok((ss / T::from_count(pair.len())).sqrt())
}

pub fn mae<T: Real>(pair: &Checked<'_, T>) -> Result<T> {
    pair.non_empty()?;
    let s = compensated_sum(residuals(pair).map(|r| r.abs()));
    Ok(s / T::from_count(pair.len()))
}

/// Root-mean-square of the predicted standard deviations.
pub fn sharpness<T: Real>(pair: &Checked<'_, T>) -> Result<T> {
    pair.non_empty()?;
    let ss = compensated_sum(pair.preds().stddevs().iter().map(|&s| s * s));
    Ok((ss / T::from_count(pair.len())).sqrt())
}

pub fn nll<T: Real>(pair: &Checked<'_, T>) -> Result<T> {
    per_point_mean(pair, nll_point)
}

pub fn crps<T: Real>(pair: &Checked<'_, T>) -> Result<T> {
    per_point_mean(pair, crps_point)
}

pub fn check_score<T: Real>(pair: &Checked<'_, T>, grid: &ProbGrid<T>) -> Result<T> {
    pair.non_empty()?;
    check_score_with(pair.preds(), pair.targets(), grid)
}

/// Mean pinball loss over points and grid levels for any quantile predictor.
pub fn check_score_with<T, P>(pred: &P, targets: &[T], grid: &ProbGrid<T>) -> Result<T>
where
    T: Real,
    P: QuantilePredictor<T> + ?Sized,
{
    shape_check(pred, targets)?;
    let mut terms = Vec::with_capacity(targets.len() * grid.len());
    for &p in grid.probs() {
        let q = pred.quantiles_at(p)?;
        terms.extend(targets.iter().zip(&q).map(|(&y, &qi)| pinball(p, y - qi)));
    }
    Ok(compensated_sum(terms) / T::from_count(targets.len() * grid.len()))
}

pub fn interval_score<T: Real>(pair: &Checked<'_, T>, grid: &ProbGrid<T>) -> Result<T> {
    pair.non_empty()?;
    interval_score_with(pair.preds(), pair.targets(), grid)
}

/// Mean interval score where each grid value `p` is a central coverage
/// level: `alpha = 1 - p`, endpoints at `alpha / 2` and `1 - alpha / 2`.
pub fn interval_score_with<T, P>(pred: &P, targets: &[T], grid: &ProbGrid<T>) -> Result<T>
where
    T: Real,
    P: QuantilePredictor<T> + ?Sized,
{
    shape_check(pred, targets)?;
    let half = T::lit(0.5);
    let mut terms = Vec::with_capacity(targets.len() * grid.len());
    for &p in grid.probs() {
        let alpha = T::one() - p;
        let lower = pred.quantiles_at(half * alpha)?;
        let upper = pred.quantiles_at(T::one() - half * alpha)?;
        terms.extend(
            targets
                .iter()
                .zip(lower.iter().zip(&upper))
                .map(|(&y, (&l, &u))| interval_point(l, u, y, alpha)),
        );
    }
    Ok(compensated_sum(terms) / T::from_count(targets.len() * grid.len()))
}

fn shape_check<T: Real, P: QuantilePredictor<T> + ?Sized>(pred: &P, targets: &[T]) -> Result<()> {
    if targets.is_empty() {
        return Err(UqError::EmptyInput("dataset has no points".into()));
    }
    if pred.n_points() != targets.len() {
        return Err(UqError::Shape {
            what: "predictions vs targets",
            left: pred.n_points(),
            right: targets.len(),
        });
    }
    Ok(())
}

/// One row of scalar metrics plus the calibration curves behind ECE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub rmse: T,
    pub mae: T,
    pub ece: T,
    pub sharpness: T,
    pub nll: T,
    pub crps: T,
    pub check: T,
    pub interval: T,
    pub calibration_curve: CalibrationCurve<T>,
    pub adv_group_curve: Option<AdvGroupCurve<T>>,
    /// Set on reports of recalibrated predictions: the quantile-based
    /// metrics (ece, check, interval, curves) come from the recalibrated
    /// quantiles, while nll, crps and sharpness are those of the original
    /// Gaussian.
    pub recalibrated: bool,
}

/// Computes every metric of the pair; the adversarial curve is included
/// only when a configuration and random source are supplied.
pub fn metric_report<T: Real>(
    pair: &Checked<'_, T>,
    grid: &ProbGrid<T>,
    adv: Option<(&AdvGroupConfig, &mut dyn RngCore)>,
) -> Result<MetricReport<T>> {
    pair.non_empty()?;
    let table = CoverageTable::build(pair.preds(), pair.targets(), grid)?;
    let calibration_curve = table.curve()?;
    let adv_group_curve = match adv {
        Some((cfg, rng)) => Some(adversarial_group_calibration_with(&table, cfg, rng)?),
        None => None,
    };
    Ok(MetricReport {
        rmse: rmse(pair)?,
        mae: mae(pair)?,
        ece: calibration_curve.ece(),
        sharpness: sharpness(pair)?,
        nll: nll(pair)?,
        crps: crps(pair)?,
        check: check_score(pair, grid)?,
        interval: interval_score(pair, grid)?,
        calibration_curve,
        adv_group_curve,
        recalibrated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::ece;
    use crate::uqcore::{validate, EvalDataset, PredictionSet, Split};
    use proptest::prelude::*;

    fn pd(means: Vec<f64>, sds: Vec<f64>, ys: Vec<f64>) -> (PredictionSet<f64>, EvalDataset<f64>) {
        (PredictionSet::new(means, sds), EvalDataset::from_targets(ys, Split::Test))
    }

    /// Trapezoid integration of (F(t) - 1{t >= y})^2 on a fine grid
    /// covering +-12 sigma, split at y so the step sits on a node.
    fn crps_by_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
        let cdf = |t: f64| std_normal_cdf((t - mu) / sigma);
        let lo = mu.min(y) - 12.0 * sigma;
        let hi = mu.max(y) + 12.0 * sigma;
        let integrate = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            // Simpson
            let mut s = g(a) + g(b);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * g(a + k as f64 * h);
            }
            s * h / 3.0
        };
        integrate(lo, y, &|t| cdf(t).powi(2)) + integrate(y, hi, &|t| (cdf(t) - 1.0).powi(2))
    }

    #[test]
    fn accuracy_examples() {
        let (p, d) = pd(vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 4.0]);
        let pair = validate(&p, &d).unwrap();
        assert!((rmse(&pair).unwrap() - 12.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&pair).unwrap(), 3.5);
        let (p, d) = pd(vec![1.0, 2.0], vec![1.0, 1.0], vec![1.0, 2.0]);
        let pair = validate(&p, &d).unwrap();
        assert_eq!(rmse(&pair).unwrap(), 0.0);
        assert_eq!(mae(&pair).unwrap(), 0.0);
    }

    #[test]
    fn sharpness_is_rms() {
        let (p, d) = pd(vec![0.0; 3], vec![1.0; 3], vec![0.0; 3]);
        assert_eq!(sharpness(&validate(&p, &d).unwrap()).unwrap(), 1.0);
        let (p, d) = pd(vec![0.0; 4], vec![0.01, 1.0, 1.5, 0.5], vec![0.0; 4]);
        let s = sharpness(&validate(&p, &d).unwrap()).unwrap();
        assert!((s - 0.935_427_709_660_131_9).abs() < 1e-12);
    }

    #[test]
    fn nll_examples() {
        let ys = vec![0.3, -2.0, 5.0];
        let (p, d) = pd(ys.clone(), vec![1.0; 3], ys.clone());
        assert!((nll(&validate(&p, &d).unwrap()).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-15);
        let (p, d) = pd(ys.iter().map(|y| y - 1.0).collect(), vec![1.0; 3], ys);
        assert!((nll(&validate(&p, &d).unwrap()).unwrap() - 1.418_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn crps_examples() {
        let c = crps_point(0.0, 1.0, 0.0_f64);
        // quadrature: 0.23369497725510907
        assert!((c - 0.233_694_977_255_109_07).abs() < 1e-12);
        assert!((crps_by_quadrature(0.0, 1.0, 0.0) - c).abs() < 1e-9);
        assert!(crps_point(2.0, 1e-9, 2.0_f64).abs() < 1e-9);
    }

    #[test]
    fn crps_closed_form_matches_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mu = rng.random_range(-5.0..5.0);
            let sigma = rng.random_range(0.05..4.0);
            let y = rng.random_range(-8.0..8.0);
            let a = crps_point(mu, sigma, y);
            let b = crps_by_quadrature(mu, sigma, y);
            assert!((a - b).abs() < 1e-6, "({mu}, {sigma}, {y}): {a} vs {b}");
        }
    }

    #[test]
    fn check_score_examples() {
        let one_level = |p: f64| ProbGrid::new(vec![p]).unwrap();
        let (pr, d) = pd(vec![1.0], vec![2.0], vec![1.0]);
        assert_eq!(check_score(&validate(&pr, &d).unwrap(), &one_level(0.5)).unwrap(), 0.0);
        // y - q = 1 at level 0.9: place y one unit above the 0.9 quantile
        let q = crate::uqcore::gaussian_quantile(0.0, 1.0, 0.9).unwrap();
        let (pr, d) = pd(vec![0.0], vec![1.0], vec![q + 1.0]);
        let s = check_score(&validate(&pr, &d).unwrap(), &one_level(0.9)).unwrap();
        assert!((s - 0.9).abs() < 1e-12);
        assert_eq!(pinball(0.9, 1.0), 0.9);
        assert!((pinball(0.9_f64, -1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pinball_at_median_is_half_mae() {
        let (p, d) = pd(vec![0.0, 1.0, -2.0], vec![1.0, 0.3, 2.0], vec![1.5, -0.25, 4.0]);
        let pair = validate(&p, &d).unwrap();
        let grid = ProbGrid::new(vec![0.5]).unwrap();
        assert_eq!(check_score(&pair, &grid).unwrap(), 0.5 * mae(&pair).unwrap());
    }

    #[test]
    fn interval_examples() {
        assert_eq!(interval_point(0.0, 1.0, 0.5, 0.05_f64), 1.0);
        assert!((interval_point(0.0, 1.0, 2.0, 0.05_f64) - 41.0).abs() < 1e-12);
        assert!((interval_point(0.0, 1.0, -1.0, 0.5_f64) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_report() {
        let ys = vec![0.5, -1.0, 2.0, 3.0];
        let (p, d) = pd(ys.clone(), vec![1e-9; 4], ys);
        let r = metric_report(&validate(&p, &d).unwrap(), &ProbGrid::default(), None).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.mae, 0.0);
        assert!(r.crps < 1e-8);
        assert!(r.adv_group_curve.is_none());
    }

    #[test]
    fn report_fields_agree_with_single_metrics() {
        let (p, d) = pd(vec![0.0, 1.0, 2.0, 0.5], vec![1.0, 0.5, 2.0, 0.7], vec![0.1, 2.0, -1.0, 0.4]);
        let pair = validate(&p, &d).unwrap();
        let g = ProbGrid::default();
        let r = metric_report(&pair, &g, None).unwrap();
        assert_eq!(r.ece, ece(&pair, &g).unwrap());
        assert_eq!(r.check, check_score(&pair, &g).unwrap());
        assert_eq!(r.interval, interval_score(&pair, &g).unwrap());
        assert!(r.rmse >= r.mae);
    }

    proptest! {
        #[test]
        fn translation_equivariance(c in -20.0..20.0_f64, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let g = ProbGrid::with_step(0.05).unwrap();
            let (p0, d0) = pd(m.clone(), s.clone(), y.clone());
            let (p1, d1) = pd(m.iter().map(|v| v + c).collect(), s, y.iter().map(|v| v + c).collect());
            let a = metric_report(&validate(&p0, &d0).unwrap(), &g, None).unwrap();
            let b = metric_report(&validate(&p1, &d1).unwrap(), &g, None).unwrap();
            let tol = 1e-9 * (1.0 + c.abs());
            for (x, z) in [(a.rmse, b.rmse), (a.mae, b.mae), (a.sharpness, b.sharpness), (a.nll, b.nll),
                           (a.crps, b.crps), (a.check, b.check), (a.interval, b.interval)] {
                prop_assert!((x - z).abs() < tol, "{x} vs {z}");
            }
            // coverage can flip only when a target sits within rounding of a quantile
            prop_assert!((a.ece - b.ece).abs() <= 1.0 / n as f64 / g.len() as f64 * 2.0 + 1e-12);
        }

        #[test]
        fn scale_equivariance(c in 0.1..10.0_f64, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let g = ProbGrid::with_step(0.05).unwrap();
            let (p0, d0) = pd(m.clone(), s.clone(), y.clone());
            let (p1, d1) = pd(m.iter().map(|v| v * c).collect(), s.iter().map(|v| v * c).collect(), y.iter().map(|v| v * c).collect());
            let a = metric_report(&validate(&p0, &d0).unwrap(), &g, None).unwrap();
            let b = metric_report(&validate(&p1, &d1).unwrap(), &g, None).unwrap();
            for (x, z) in [(a.rmse, b.rmse), (a.mae, b.mae), (a.sharpness, b.sharpness),
                           (a.crps, b.crps), (a.check, b.check), (a.interval, b.interval)] {
                prop_assert!((x * c - z).abs() < 1e-9 * (1.0 + z.abs()), "{x} * {c} vs {z}");
            }
            prop_assert!((a.nll + c.ln() - b.nll).abs() < 1e-9);
        }
    }
}
