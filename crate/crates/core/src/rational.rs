//! Exact non-negative rationals used for marks, fractions and rates.
//!
//! On the wire a value is written as `"n"` or `"n/d"` in lowest terms. Parsing
//! also accepts finite decimals (`"0.5"`) and JSON numbers, converted exactly.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(Ratio<i64>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational `{0}`")]
pub struct ParseRationalError(String);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Panics when `den` is zero.
    pub fn new(num: i64, den: i64) -> Self {
        Rational(Ratio::new(num, den))
    }

    pub fn integer(n: i64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        *self.0.numer() < 0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Rounds `self * 100` half away from zero.
    pub fn percent_rounded(&self) -> i64 {
        let scaled = self.0 * Ratio::from_integer(100);
        scaled.round().to_integer()
    }

    pub fn checked_div(&self, rhs: Rational) -> Option<Rational> {
        if rhs.is_zero() {
            None
        } else {
            Some(Rational(self.0 / rhs.0))
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseRationalError(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| err())?;
            let d: i64 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Rational::new(n, d));
        }
        parse_decimal(t).ok_or_else(err)
    }
}

fn parse_decimal(t: &str) -> Option<Rational> {
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let den = 10i64.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
    let r = Rational::new(num, den);
    Some(if neg { Rational::ZERO - r } else { r })
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::integer(n)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, r| acc + r)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, r| acc + *r)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a rational as \"n\", \"n/d\", a decimal string, or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(Rational::integer(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        i64::try_from(v).map(Rational::integer).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        // shortest round-trip repr, then exact decimal conversion
        parse_decimal(&format!("{v}")).ok_or_else(|| E::custom(format!("unrepresentable number {v}")))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!("3".parse::<Rational>().unwrap(), Rational::integer(3));
        assert_eq!("2/4".parse::<Rational>().unwrap(), Rational::new(1, 2));
        assert_eq!("0.25".parse::<Rational>().unwrap(), Rational::new(1, 4));
        assert_eq!(".5".parse::<Rational>().unwrap(), Rational::new(1, 2));
        assert!("1/0".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
        assert!("".parse::<Rational>().is_err());
    }

    #[test]
    fn serde_forms() {
        let r: Rational = serde_json::from_str("0.1").unwrap();
        assert_eq!(r, Rational::new(1, 10));
        let r: Rational = serde_json::from_str("\"1/3\"").unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), "\"1/3\"");
        let r: Rational = serde_json::from_str("7").unwrap();
        assert_eq!(r.to_string(), "7");
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(Rational::new(1, 4).percent_rounded(), 25);
        assert_eq!(Rational::new(1, 3).percent_rounded(), 33);
        assert_eq!(Rational::new(2, 3).percent_rounded(), 67);
        assert_eq!(Rational::new(1, 200).percent_rounded(), 1);
    }
}
