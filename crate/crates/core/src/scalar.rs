//! Scalar abstraction: the solver is generic over any IEEE float.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar usable throughout the solver: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + Display + Debug + LowerExp + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from an `f64` literal.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert to scalar")
    }

    /// Round-trip to `f64` for reporting.
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Numerically stable `log(sum_j exp(v_j))`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let m = values
        .iter()
        .cloned()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if !m.is_finite() {
        return m;
    }
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - m).exp());
    m + sum.ln()
}

/// Stable softmax weights `exp(v_j) / sum_k exp(v_k)`.
pub fn softmax<T: Scalar>(values: &[T]) -> Vec<T> {
    let lse = log_sum_exp(values);
    values.iter().map(|&v| (v - lse).exp()).collect()
}
