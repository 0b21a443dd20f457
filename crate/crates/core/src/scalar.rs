//! Scalar abstraction shared by the exact and floating code paths.
//!
//! Everything that manipulates drift coefficients, test functions or simplex
//! tableaux is written once against [`Scalar`] and instantiated either with an
//! exact rational (identities must hold with zero tolerance) or with a float
//! (speed at larger sizes, or irrational parameters such as `sqrt(3)`).

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync
{
    /// Slack used when comparing against zero. Exactly zero for rationals.
    fn tolerance() -> Self;

    /// Whether arithmetic is exact.
    fn is_exact() -> bool;

    fn from_int(x: i64) -> Self {
        Self::from_i64(x).expect("integer fits the scalar type")
    }

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_pos(&self) -> bool {
        *self > Self::tolerance()
    }

    fn is_neg(&self) -> bool {
        *self < -Self::tolerance()
    }

    fn is_negligible(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-11
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }
    fn is_exact() -> bool {
        true
    }
}

impl Scalar for Ratio<i64> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn is_exact() -> bool {
        true
    }
}

/// Convert an `f64` to the nearest exact rational (binary expansion, lossless).
pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// Render a rational as `p/q` (or `p` when integral).
pub fn rational_string(x: &BigRational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}
