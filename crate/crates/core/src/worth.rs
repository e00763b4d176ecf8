//! Scalar types a game can take its worth in.
//!
//! Exact games carry [`Rational`] worths so that published tables can be
//! reproduced bit for bit; numeric games carry `f64`. Every computation is
//! generic over [`Worth`], so the two never mix inside one run.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Absolute tolerance used when comparing numeric (float) worths.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorthKind {
    Exact,
    Numeric,
}

pub trait Worth:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Sum
{
    const KIND: WorthKind;

    fn zero() -> Self;
    fn from_ratio(r: &Rational) -> Self;
    /// Exact conversion from a float; fails on NaN or infinity.
    fn from_f64(x: f64) -> Result<Self>;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    /// Equality under the kind's comparison rule: exact for rationals,
    /// [`NUMERIC_TOLERANCE`] for floats.
    fn approx_eq(&self, other: &Self) -> bool;

    fn is_zero_worth(&self) -> bool {
        self.approx_eq(&Self::zero())
    }

    fn from_int(i: i64) -> Self {
        Self::from_ratio(&Rational::from_integer(BigInt::from(i)))
    }
}

impl Worth for Rational {
    const KIND: WorthKind = WorthKind::Exact;

    fn zero() -> Self {
        Zero::zero()
    }

    fn from_ratio(r: &Rational) -> Self {
        r.clone()
    }

    fn from_f64(x: f64) -> Result<Self> {
        BigRational::from_float(x).ok_or(Error::NonFinite(x))
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }
}

impl Worth for f64 {
    const KIND: WorthKind = WorthKind::Numeric;

    fn zero() -> Self {
        0.0
    }

    fn from_ratio(r: &Rational) -> Self {
        ratio_to_f64(r)
    }

    fn from_f64(x: f64) -> Result<Self> {
        Ok(x)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= NUMERIC_TOLERANCE
    }
}

/// Nearest `f64` to a big rational, robust to numerators and denominators
/// far outside the `f64` range.
pub fn ratio_to_f64(r: &Rational) -> f64 {
    if let Some(x) = num_traits::ToPrimitive::to_f64(r) {
        if x.is_finite() && (x != 0.0 || r.is_zero()) {
            return x;
        }
    }
    // Shift both parts down to 64 significant bits before dividing.
    let num = r.numer();
    let den = r.denom();
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let ns = (nb - 64).max(0);
    let ds = (db - 64).max(0);
    let n = (num >> ns as usize).to_f64().unwrap_or(0.0);
    let d = (den >> ds as usize).to_f64().unwrap_or(1.0);
    let exp = ns - ds;
    let mut x = n / d;
    // apply 2^exp in bounded steps so intermediate powers stay finite
    let mut e = exp;
    while e > 0 {
        let step = e.min(1000);
        x *= 2f64.powi(step as i32);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        x /= 2f64.powi(step as i32);
        e += step;
    }
    x
}

/// Parse "p/q", an integer, or a decimal literal ("1.25", "-3e-2") exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let err = || Error::ParseNumber(text.to_string());
    if s.is_empty() {
        return Err(err());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| err())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i64>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(err());
    }
    let all = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(BigInt::from_str(&all).map_err(|_| err())?);
    let scale = exponent - frac_part.len() as i64;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale > 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else if scale < 0 {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

/// Canonical "p/q" rendering; integers print without a denominator.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Render a float with `digits` significant digits, trimming trailing zeros.
pub fn format_float(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let magnitude = x.abs().log10().floor() as i64;
    if magnitude < -5 || magnitude >= digits as i64 {
        let s = format!("{:.*e}", digits - 1, x);
        let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{}", trim_zeros(m), e);
    }
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn rational(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}
