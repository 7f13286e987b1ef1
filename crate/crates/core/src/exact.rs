//! Serialisable exact rationals.
//!
//! Rationals travel as `{"num": "<decimal>", "den": "<decimal>"}` so that no
//! precision is lost in JSON reports.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::rational_to_f64;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(pub BigRational);

impl ExactRational {
    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }

    pub fn from_integer(v: i64) -> Self {
        ExactRational(BigRational::from_integer(BigInt::from(v)))
    }
}

impl From<BigRational> for ExactRational {
    fn from(q: BigRational) -> Self {
        ExactRational(q)
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    num: String,
    den: String,
}

impl Serialize for ExactRational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire {
            num: self.0.numer().to_string(),
            den: self.0.denom().to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = Wire::deserialize(d)?;
        let num = BigInt::from_str(&w.num).map_err(D::Error::custom)?;
        let den = BigInt::from_str(&w.den).map_err(D::Error::custom)?;
        if den == BigInt::from(0) {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(ExactRational(BigRational::new(num, den)))
    }
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn ratio_u128(num: u128, den: u128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `num / p^exp` as an exact rational.
pub fn over_power(num: u128, p: u64, exp: u32) -> BigRational {
    BigRational::new(BigInt::from(num), num_traits::pow(BigInt::from(p), exp as usize))
}

pub fn approx(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| rational_to_f64(q))
}
