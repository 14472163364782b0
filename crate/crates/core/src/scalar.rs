//! Scalar fields used throughout the crate: exact rationals and `f64`.
//!
//! Every algebraic routine is generic over [`Scalar`]; a value's type fixes
//! its arithmetic mode, so exact and floating data never mix implicitly.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic mode of a computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Exact => write!(f, "exact"),
            Mode::Float => write!(f, "float"),
        }
    }
}

/// A field element.
pub trait Scalar:
    Clone
    + Debug
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
{
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(q: &BigRational) -> Self;
    fn from_i64(n: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Exact rational value (binary expansion for floats).
    fn to_rational(&self) -> BigRational;
    /// Exact zero test for rationals, `== 0.0` for floats.
    fn is_zero(&self) -> bool;
    /// Zero test used by elimination: exact for rationals, `|x| <= tol` for floats.
    fn near_zero(&self, tol: f64) -> bool;
    /// Pivot preference; larger is better.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
    fn is_positive(&self) -> bool {
        self.to_f64() > 0.0
    }
    /// Serialised form: `"p/q"` for rationals, shortest round-trip decimal for floats.
    fn to_text(&self) -> String;
    /// Structure constants in this scalar type.
    fn pick_table(t: &crate::free_lie::TablePair) -> &crate::free_lie::StructureTable<Self>;

    fn from_ratio(p: i64, q: i64) -> Self {
        Self::from_rational(&BigRational::new(BigInt::from(p), BigInt::from(q)))
    }
}

impl Scalar for BigRational {
    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
    fn to_rational(&self) -> BigRational {
        self.clone()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn near_zero(&self, _tol: f64) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn to_text(&self) -> String {
        format_rational(self)
    }
    fn pick_table(t: &crate::free_lie::TablePair) -> &crate::free_lie::StructureTable<Self> {
        &t.exact
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(q: &BigRational) -> Self {
        ratio_to_f64(q)
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_rational(&self) -> BigRational {
        BigRational::from_float(*self).unwrap_or_else(Zero::zero)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn near_zero(&self, tol: f64) -> bool {
        self.abs() <= tol
    }
    fn to_text(&self) -> String {
        format!("{self:?}")
    }
    fn pick_table(t: &crate::free_lie::TablePair) -> &crate::free_lie::StructureTable<Self> {
        &t.float
    }
}

/// Rational to nearest-ish `f64`, robust for huge numerators/denominators.
pub fn ratio_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(900) as usize;
    let n = q.numer() >> shift;
    let d = q.denom() >> shift;
    n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
}

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

pub fn rat_int(p: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(p))
}

/// `"p/q"` with the denominator omitted when it is one.
pub fn format_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"-0.125"`, exactly.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {text:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int_val = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(int_digits).map_err(|_| bad())?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_val = if frac.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(frac).map_err(|_| bad())?
        };
        let mag = BigRational::new(int_val * &scale + frac_val, scale);
        return Ok(if neg { -mag } else { mag });
    }
    BigInt::from_str(s).map(BigRational::from_integer).map_err(|_| bad())
}

/// Parses a scalar of the requested type from text.
pub fn parse_scalar<F: Scalar>(text: &str) -> Result<F> {
    match F::MODE {
        Mode::Exact => parse_rational(text).map(|q| F::from_rational(&q)),
        Mode::Float => {
            if text.contains('/') {
                parse_rational(text).map(|q| F::from_rational(&q))
            } else {
                text.trim()
                    .parse::<f64>()
                    .map(F::from_f64_lossy)
                    .map_err(|_| Error::Parse(format!("not a number: {text:?}")))
            }
        }
    }
}

/// Float conversion for float-mode scalars. Exact scalars go through the
/// shortest decimal, so this never silently rounds a rational.
pub trait FromF64Lossy {
    fn from_f64_lossy(x: f64) -> Self;
}

impl<F: Scalar> FromF64Lossy for F {
    fn from_f64_lossy(x: f64) -> Self {
        match BigRational::from_float(x) {
            Some(q) => F::from_rational(&q),
            None => F::zero(),
        }
    }
}

/// Least common multiple of the denominators of `v`, as an integer rational.
pub fn common_denominator(v: &[BigRational]) -> BigRational {
    use num_integer::Integer;
    let mut l = BigInt::one();
    for q in v {
        l = l.lcm(q.denom());
    }
    BigRational::from_integer(l)
}

/// Scales `v` to a primitive integer vector whose first nonzero entry is positive.
pub fn clear_denominators(v: &[BigRational]) -> Vec<BigRational> {
    use num_integer::Integer;
    let l = common_denominator(v);
    let ints: Vec<BigInt> = v.iter().map(|q| (q * &l).to_integer()).collect();
    let mut g = BigInt::zero();
    for i in &ints {
        g = g.gcd(i);
    }
    if g.is_zero() {
        return v.to_vec();
    }
    let sign = match ints.iter().find(|i| !i.is_zero()) {
        Some(first) if first.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    ints.into_iter()
        .map(|i| BigRational::from_integer(i * &sign / &g))
        .collect()
}
