use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the whole library is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the precision
/// (normalization checks, log-zero cutoffs) are exposed here so the numeric
/// code never hard-codes an `f64` constant.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a probability table's total mass from 1.
    const NORM_TOL: f64;
    /// Probabilities at or below this are treated as exact zeros inside logs.
    const LOG_ZERO: f64;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// `p ln p` with the measure-zero convention.
    #[inline]
    fn xlogx(self) -> Self {
        if self.as_f64() <= Self::LOG_ZERO {
            Self::zero()
        } else {
            self * self.ln()
        }
    }
}

impl Scalar for f64 {
    const NORM_TOL: f64 = 1e-9;
    const LOG_ZERO: f64 = 1e-15;
}

impl Scalar for f32 {
    const NORM_TOL: f64 = 1e-5;
    const LOG_ZERO: f64 = 1e-30;
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
