//! Numeric backends for probability tables.
//!
//! Elicitation and property-layer code is generic over [`Scalar`] so the same
//! routines run in exact rational arithmetic (for checking hand-computed
//! fractions) and in `f64` (the runtime path).

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = BigRational;

/// Absolute tolerance used by the float backend for normalization checks.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

pub trait Scalar:
    Clone + PartialEq + PartialOrd + fmt::Debug + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    fn from_prob(p: &Prob) -> Self;

    /// Equality up to the backend's tolerance (exact for rationals).
    fn near(&self, other: &Self) -> bool;

    fn to_prob(&self) -> Prob;

    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn from_prob(p: &Prob) -> Self {
        p.to_f64()
    }

    fn near(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TOLERANCE
    }

    fn to_prob(&self) -> Prob {
        Prob::Float(*self)
    }
}

impl Scalar for Rational {
    fn from_prob(p: &Prob) -> Self {
        match p {
            Prob::Exact(r) => r.clone(),
            Prob::Float(f) => Rational::from_float(*f).unwrap_or_else(Rational::zero),
        }
    }

    fn near(&self, other: &Self) -> bool {
        self == other
    }

    fn to_prob(&self) -> Prob {
        Prob::Exact(self.clone())
    }
}

pub fn sum<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + v.clone())
}

/// Scales `values` to sum to one. Returns `None` when the total is zero.
pub fn normalize<T: Scalar>(values: &[T]) -> Option<Vec<T>> {
    let total = sum(values);
    if total.is_zero() {
        return None;
    }
    Some(values.iter().map(|v| v.clone() / total.clone()).collect())
}

/// A probability as written in a document: either an exact fraction
/// (`"1/3"`, `"0.25"`) or a plain JSON float.
#[derive(Clone, Debug, PartialEq)]
pub enum Prob {
    Exact(Rational),
    Float(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Prob::Float(f) => *f,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Prob::Exact(r) => *r < Rational::zero(),
            Prob::Float(f) => *f < 0.0 || f.is_nan(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_zero(),
            Prob::Float(f) => *f == 0.0,
        }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Prob::Exact(Rational::new(BigInt::from(num), BigInt::from(den)))
    }
}

/// Checks that a row of document probabilities sums to one: exactly when all
/// entries are fractions, within [`FLOAT_TOLERANCE`] otherwise.
pub fn row_sums_to_one(row: &[Prob]) -> bool {
    if row.iter().all(|p| matches!(p, Prob::Exact(_))) {
        let total = row.iter().fold(Rational::zero(), |acc, p| acc + Rational::from_prob(p));
        total.is_one()
    } else {
        let total: f64 = row.iter().map(Prob::to_f64).sum();
        (total - 1.0).abs() <= FLOAT_TOLERANCE
    }
}

impl FromStr for Prob {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num = BigInt::from_str(num.trim()).map_err(|e| format!("bad numerator in `{s}`: {e}"))?;
            let den = BigInt::from_str(den.trim()).map_err(|e| format!("bad denominator in `{s}`: {e}"))?;
            if den.is_zero() {
                return Err(format!("zero denominator in `{s}`"));
            }
            return Ok(Prob::Exact(Rational::new(num, den)));
        }
        parse_decimal(s)
            .map(Prob::Exact)
            .ok_or_else(|| format!("`{s}` is neither a fraction nor a decimal"))
    }
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(r) => write!(f, "{r}"),
            Prob::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Prob::Exact(r) => serializer.serialize_str(&r.to_string()),
            Prob::Float(f) => serializer.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ProbVisitor;

        impl Visitor<'_> for ProbVisitor {
            type Value = Prob;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a fraction string such as \"1/3\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Prob, E> {
                Ok(Prob::Float(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Prob, E> {
                Ok(Prob::Exact(Rational::from_integer(BigInt::from(v))))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Prob, E> {
                Ok(Prob::Exact(Rational::from_integer(BigInt::from(v))))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Prob, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ProbVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals_exactly() {
        assert_eq!("1/3".parse::<Prob>().unwrap(), Prob::ratio(1, 3));
        assert_eq!("0.25".parse::<Prob>().unwrap(), Prob::ratio(1, 4));
        assert_eq!("2".parse::<Prob>().unwrap(), Prob::ratio(2, 1));
        assert!("1/0".parse::<Prob>().is_err());
        assert!("abc".parse::<Prob>().is_err());
    }

    #[test]
    fn row_sum_check_is_exact_for_fractions() {
        let row = vec![Prob::ratio(1, 3), Prob::ratio(1, 6), Prob::ratio(1, 2)];
        assert!(row_sums_to_one(&row));
        let bad = vec![Prob::ratio(1, 3), Prob::ratio(1, 3)];
        assert!(!row_sums_to_one(&bad));
        assert!(row_sums_to_one(&[Prob::Float(0.1), Prob::Float(0.2), Prob::Float(0.7)]));
    }

    #[test]
    fn json_round_trip() {
        let v: Vec<Prob> = serde_json::from_str(r#"["2/3", 0.5, 1]"#).unwrap();
        assert_eq!(v[0], Prob::ratio(2, 3));
        assert_eq!(v[1], Prob::Float(0.5));
        assert_eq!(serde_json::to_string(&v[0]).unwrap(), "\"2/3\"");
    }
}
