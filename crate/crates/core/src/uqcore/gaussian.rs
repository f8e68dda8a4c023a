//! Error function and Gaussian CDF / quantile evaluation.
//!
//! `erf` uses the all-positive-terms series
//! `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!`
//! for `|x| < 3` and the Laplace continued fraction for `erfc` beyond, so
//! neither branch suffers cancellation. Both iterate until the increment
//! falls below machine epsilon of the scalar type.

use crate::error::{Result, UqError};
use crate::real::Real;

const SERIES_LIMIT: f64 = 3.0;
const MAX_TERMS: usize = 500;
const QUANTILE_BRACKET: f64 = 38.0;
const MAX_BISECTIONS: usize = 256;

fn erf_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let two_x2 = x2 + x2;
    let mut term = x;
    let mut sum = x;
    for n in 1..MAX_TERMS {
        term = term * two_x2 / T::from_count(2 * n + 1);
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    T::FRAC_2_SQRT_PI() * (-x2).exp() * sum
}

/// `erfc(x)` for `x >= SERIES_LIMIT`, modified Lentz on
/// `x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))`.
fn erfc_continued_fraction<T: Real>(x: T) -> T {
    let tiny = T::min_positive_value().sqrt();
    let half = T::lit(0.5);
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for n in 1..MAX_TERMS {
        let a = half * T::from_count(n);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (f * T::PI().sqrt())
}

pub fn erf<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    let v = if ax < T::lit(SERIES_LIMIT) {
        erf_series(ax)
    } else {
        T::one() - erfc_continued_fraction(ax)
    };
    if x < T::zero() {
        -v
    } else {
        v
    }
}

pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x >= T::lit(SERIES_LIMIT) {
        erfc_continued_fraction(x)
    } else if x <= -T::lit(SERIES_LIMIT) {
        T::lit(2.0) - erfc_continued_fraction(-x)
    } else {
        T::one() - erf_series(x.abs()) * x.signum()
    }
}

/// Standard normal density.
pub fn std_normal_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::lit(0.5);
    inv_sqrt_2pi * (T::lit(-0.5) * z * z).exp()
}

/// Standard normal CDF via `0.5 * erfc(-z / sqrt 2)`.
pub fn std_normal_cdf<T: Real>(z: T) -> T {
    T::lit(0.5) * erfc(-z * T::FRAC_1_SQRT_2())
}

/// Standard normal quantile by bisection on [`std_normal_cdf`] followed by a
/// single Newton step. The bisection path depends only on `p`, which keeps
/// the result monotone in `p`.
pub fn std_normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(UqError::InvalidArgument(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let mut lo = -T::lit(QUANTILE_BRACKET);
    let mut hi = T::lit(QUANTILE_BRACKET);
    let two = T::lit(2.0);
    let mut z = T::zero();
    for _ in 0..MAX_BISECTIONS {
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            z = mid;
            break;
        }
        let c = std_normal_cdf(mid);
        if c == p {
            return Ok(mid);
        }
        if c < p {
            lo = mid;
        } else {
            hi = mid;
        }
        z = mid;
    }
    let density = std_normal_pdf(z);
    if density > T::zero() {
        let step = (std_normal_cdf(z) - p) / density;
        if step.is_finite() {
            z = z - step;
        }
    }
    Ok(z)
}

fn check_location_scale<T: Real>(mu: T, sigma: T) -> Result<()> {
    if !mu.is_finite() {
        return Err(UqError::InvalidArgument(format!("mean must be finite, got {mu}")));
    }
    if !(sigma.is_finite() && sigma > T::zero()) {
        return Err(UqError::InvalidArgument(format!(
            "standard deviation must be positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

/// `P(Y <= y)` for `Y ~ N(mu, sigma^2)`.
pub fn gaussian_cdf<T: Real>(mu: T, sigma: T, y: T) -> Result<T> {
    check_location_scale(mu, sigma)?;
    if !y.is_finite() {
        return Err(UqError::InvalidArgument(format!("evaluation point must be finite, got {y}")));
    }
    Ok(std_normal_cdf((y - mu) / sigma))
}

/// The `p`-th quantile of `N(mu, sigma^2)`.
pub fn gaussian_quantile<T: Real>(mu: T, sigma: T, p: T) -> Result<T> {
    check_location_scale(mu, sigma)?;
    Ok(mu + sigma * std_normal_quantile(p)?)
}
