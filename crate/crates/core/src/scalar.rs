//! Numeric scalar abstraction.
//!
//! Every model, workload and schedule in this crate is generic over a
//! [`Scalar`]. Exact rationals are the default (see [`crate::Rational`]);
//! floats are supported for quick experiments where the 1e-5 compaction
//! weight is allowed to round.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Builds `num / den`. `den` must be non-zero.
    fn from_ratio(num: i128, den: i128) -> Self;

    /// Slack allowed when comparing a left-hand side against a bound.
    /// Zero for exact types.
    fn tolerance() -> Self {
        Self::zero()
    }

    /// True when the type is exact; comparisons never use a tolerance then.
    fn is_exact() -> bool {
        true
    }

    /// Plain decimal rendering when one exists, otherwise `Display`.
    fn to_plain_string(&self) -> String {
        self.to_string()
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_int(v: i64) -> Self {
        Self::from_ratio(v as i128, 1)
    }
}

macro_rules! float_scalar {
    ($t:ty, $eps:expr) => {
        impl Scalar for $t {
            fn from_ratio(num: i128, den: i128) -> Self {
                (num as f64 / den as f64) as $t
            }
            fn tolerance() -> Self {
                $eps
            }
            fn is_exact() -> bool {
                false
            }
        }
    };
}

float_scalar!(f64, 1e-9);
float_scalar!(f32, 1e-4);

/// Renders a reduced ratio as a terminating decimal when the denominator
/// only has factors 2 and 5.
fn ratio_plain<T>(numer: &T, denom: &T) -> Option<String>
where
    T: Integer + Clone + Display + Signed + From<u8>,
{
    let two = T::from(2u8);
    let five = T::from(5u8);
    let ten = T::from(10u8);
    let mut d = denom.clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d.is_multiple_of(&two) {
        d = d / two.clone();
        twos += 1;
    }
    while d.is_multiple_of(&five) {
        d = d / five.clone();
        fives += 1;
    }
    if !d.is_one() {
        return None;
    }
    let digits = twos.max(fives);
    if digits == 0 {
        return Some(numer.to_string());
    }
    // scale numerator so the denominator becomes 10^digits
    let mut scale = T::one();
    for _ in 0..digits {
        scale = scale * ten.clone();
    }
    let scaled = numer.clone() * (scale.clone() / denom.clone());
    let neg = scaled.is_negative();
    let abs = scaled.abs();
    let int_part = abs.clone() / scale.clone();
    let frac = abs % scale;
    let mut frac_s = frac.to_string();
    while frac_s.len() < digits as usize {
        frac_s.insert(0, '0');
    }
    let frac_s = frac_s.trim_end_matches('0');
    let sign = if neg { "-" } else { "" };
    if frac_s.is_empty() {
        Some(format!("{sign}{int_part}"))
    } else {
        Some(format!("{sign}{int_part}.{frac_s}"))
    }
}

macro_rules! ratio_scalar {
    ($int:ty) => {
        impl Scalar for Ratio<$int> {
            fn from_ratio(num: i128, den: i128) -> Self {
                Ratio::new(num as $int, den as $int)
            }
            fn to_plain_string(&self) -> String {
                ratio_plain(self.numer(), self.denom()).unwrap_or_else(|| self.to_string())
            }
        }
    };
}

ratio_scalar!(i64);
ratio_scalar!(i128);

impl Scalar for BigRational {
    fn from_ratio(num: i128, den: i128) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_plain_string(&self) -> String {
        ratio_plain(self.numer(), self.denom()).unwrap_or_else(|| self.to_string())
    }
}

/// Parses a decimal literal such as `12`, `-3.25` or `.5` exactly.
pub fn parse_decimal<S: Scalar>(text: &str) -> Option<S> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let (neg, body) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (int_s, frac_s) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_s.is_empty() && frac_s.is_empty() {
        return None;
    }
    if !int_s.bytes().all(|b| b.is_ascii_digit()) || !frac_s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if int_s.len() + frac_s.len() > 30 {
        return None;
    }
    let mut num: i128 = 0;
    for b in int_s.bytes().chain(frac_s.bytes()) {
        num = num * 10 + (b - b'0') as i128;
    }
    let den = 10i128.pow(frac_s.len() as u32);
    let num = if neg { -num } else { num };
    Some(S::from_ratio(num, den))
}

/// Larger of two partially ordered values (first wins on ties or NaN).
pub fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

pub fn min_of<S: Scalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Ratio<i128>;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_decimal::<Q>("12.5"), Some(Q::new(25, 2)));
        assert_eq!(parse_decimal::<Q>("-0.001"), Some(Q::new(-1, 1000)));
        assert_eq!(parse_decimal::<Q>(".5"), Some(Q::new(1, 2)));
        assert_eq!(parse_decimal::<Q>("7"), Some(Q::from_integer(7)));
        assert_eq!(parse_decimal::<Q>("1e3"), None);
        assert_eq!(parse_decimal::<Q>(""), None);
        assert_eq!(parse_decimal::<Q>("."), None);
        assert_eq!(parse_decimal::<f64>("2.25"), Some(2.25));
    }

    #[test]
    fn plain_rendering() {
        assert_eq!(Q::new(25, 2).to_plain_string(), "12.5");
        assert_eq!(Q::new(-1, 1000).to_plain_string(), "-0.001");
        assert_eq!(Q::new(50, 3).to_plain_string(), "50/3");
        assert_eq!(Q::from_integer(4).to_plain_string(), "4");
        assert_eq!(Q::new(100001, 20000).to_plain_string(), "5.00005");
        let big = BigRational::from_ratio(7, 4);
        assert_eq!(big.to_plain_string(), "1.75");
    }

    #[test]
    fn compaction_weight_is_exact_for_rationals() {
        let w = Q::from_ratio(1, 100_000);
        assert_eq!(w * Q::from_integer(100_000), Q::from_integer(1));
        assert!(Q::is_exact());
        assert!(!f64::is_exact());
    }
}
