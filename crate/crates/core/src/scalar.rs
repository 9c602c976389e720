//! Scalar abstraction for scores and ratios.
//!
//! Every metric in this crate is computed from integer counts. Keeping the
//! arithmetic generic lets the same code produce `f64` reports for output and
//! exact [`Rational64`](num_rational::Rational64) reports for conformance
//! checks.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::Num;

/// Numeric type usable for metric values.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// Lossless (for realistic corpus sizes) conversion of a count.
    fn from_count(n: usize) -> Self;

    fn to_f64(&self) -> f64;

    /// `num / den`. Callers guarantee `den > 0`.
    fn ratio(num: usize, den: usize) -> Self {
        debug_assert!(den > 0, "ratio with zero denominator");
        Self::from_count(num) / Self::from_count(den)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count exceeds i64"))
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Scalar for Ratio<i128> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i128)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn rational_ratio_is_reduced() {
        let r = Rational64::ratio(6, 8);
        assert_eq!(r, Rational64::new(3, 4));
        assert_eq!(r.to_f64(), 0.75);
    }

    #[test]
    fn float_ratio() {
        assert_eq!(f64::ratio(1, 4), 0.25);
        assert_eq!(f32::ratio(1, 2), 0.5);
        assert_eq!(f64::two(), 2.0);
    }
}
