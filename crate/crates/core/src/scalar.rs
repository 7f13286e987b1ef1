//! Scalar abstractions shared by the exact and the floating-point layers.
//!
//! The piecewise-polynomial convolution runs over any [`Field`] (exact
//! rationals for integer hyperplanes, `f64` inside Monte-Carlo loops), and
//! the quadrature, fitting and exponential-sum code is written against
//! [`Real`].

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Ordered field with a lossless embedding of small integers.
pub trait Field: Clone + Num + Signed + PartialOrd + FromPrimitive + Debug {
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("small integers embed in every field")
    }

    fn to_f64_lossy(&self) -> f64;
}

impl Field for f32 {
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

impl Field for f64 {
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Field for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Floating point: f32 or f64.
pub trait Real: Float + FloatConst + FromPrimitive + Field + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts a big rational to the nearest representable `f64`, also when
/// numerator and denominator individually overflow.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // shift both to ~60 significant bits
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift_n = (nb - 60).max(0);
    let shift_d = (db - 60).max(0);
    let n = (q.numer() >> shift_n as usize).to_f64().unwrap_or(0.0);
    let d = (q.denom() >> shift_d as usize).to_f64().unwrap_or(1.0);
    (n / d) * 2f64.powi((shift_n - shift_d) as i32)
}
