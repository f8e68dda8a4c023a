use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar type the metric code is generic over.
///
/// Implemented for `f32` and `f64`. Special-function iterations stop at
/// `Self::epsilon()`, so accuracy tracks the precision of the type.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; every literal used in the crate is
    /// representable (possibly rounded) in any implementor.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count must convert")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier-compensated sum; result is independent of how the slice was
/// produced as long as the element order is fixed.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Compensated mean of a non-empty sequence; `None` when empty.
pub fn mean<T: Real>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut n = 0usize;
    let s = compensated_sum(values.into_iter().inspect(|_| n += 1));
    (n > 0).then(|| s / T::from_count(n))
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
///
/// Both are computed relative to the first element, so a sequence of
/// identical values yields exactly that value and a zero error.
pub fn mean_and_stderr<T: Real>(values: &[T]) -> Option<(T, T)> {
    let first = *values.first()?;
    let n = T::from_count(values.len());
    let shift = compensated_sum(values.iter().map(|&v| v - first)) / n;
    let m = first + shift;
    if values.len() < 2 {
        return Some((m, T::zero()));
    }
    let ss = compensated_sum(values.iter().map(|&v| {
        let d = (v - first) - shift;
        d * d
    }));
    let var = ss / (n - T::one());
    Some((m, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1.0e16_f64, 1.0, -1.0e16];
        assert_eq!(compensated_sum(v), 1.0);
    }

    #[test]
    fn identical_values_have_exact_mean() {
        let x = 0.1_f64 + 0.2;
        let (m, se) = mean_and_stderr(&[x; 20]).unwrap();
        assert_eq!(m, x);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn stderr_matches_textbook() {
        let (m, se) = mean_and_stderr(&[1.0_f64, 2.0, 3.0, 4.0]).unwrap();
        assert!((m - 2.5).abs() < 1e-15);
        // sd = sqrt(5/3), se = sd / 2
        assert!((se - (5.0_f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!(mean::<f64>([]).is_none());
    }
}
