//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the laboratory can run on.
///
/// Implemented for `f32` and `f64`. All algorithms are written once against
/// this trait; the crate root exports `f64` aliases for the common case.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count or index.
    #[inline]
    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn type_name() -> &'static str;
}

impl Real for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}

impl Real for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp<S: Real>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(Σ e^xᵢ)` without overflow.
pub fn log_sum_exp<S: Real>(terms: &[S]) -> S {
    terms.iter().fold(S::neg_infinity(), |acc, &x| log_add_exp(acc, x))
}

/// Natural log of a nonnegative value, mapping 0 to -inf.
pub fn ln0<S: Real>(x: S) -> S {
    if x <= S::zero() {
        S::neg_infinity()
    } else {
        x.ln()
    }
}
