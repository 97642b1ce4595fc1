use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::Float;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Binary precision in bits. Never below 64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Precision(u32);

impl Precision {
    pub const MIN_BITS: u32 = 64;
    pub const DEFAULT: Precision = Precision(128);

    pub fn new(bits: u32) -> Result<Self> {
        if bits < Self::MIN_BITS {
            return Err(Error::InvalidPrecision(bits));
        }
        Ok(Precision(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn doubled(self) -> Self {
        Precision(self.0.saturating_mul(2))
    }

    /// Rounds `bits` up to a multiple of 64 (and at least 64), saturating
    /// at the largest such multiple.
    pub fn rounded_up(bits: u32) -> Self {
        let b = bits.clamp(Self::MIN_BITS, u32::MAX - 63);
        Precision(b.div_ceil(64) * 64)
    }

    /// `2^-(bits - slack)` at this precision.
    pub fn tolerance(self, slack: u32) -> BigScalar {
        let e = -(self.0 as i64 - slack as i64);
        BigScalar::pow2(e as i32, self)
    }
}

impl TryFrom<u32> for Precision {
    type Error = Error;
    fn try_from(bits: u32) -> Result<Self> {
        Precision::new(bits)
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.0
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// An arbitrary-precision real. Binary operations round to the larger of the
/// two operand precisions.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct BigScalar(Float);

fn is_decimal_literal(s: &str) -> bool {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return false;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == b.len()
}

impl BigScalar {
    pub fn from_float(value: Float) -> Self {
        BigScalar(value)
    }

    pub fn from_f64(v: f64, prec: Precision) -> Self {
        BigScalar(Float::with_val(prec.bits(), v))
    }

    pub fn from_i64(v: i64, prec: Precision) -> Self {
        BigScalar(Float::with_val(prec.bits(), v))
    }

    pub fn zero(prec: Precision) -> Self {
        Self::from_i64(0, prec)
    }

    pub fn one(prec: Precision) -> Self {
        Self::from_i64(1, prec)
    }

    /// `2^exp`, exact.
    pub fn pow2(exp: i32, prec: Precision) -> Self {
        let one = Float::with_val(prec.bits(), 1);
        BigScalar(if exp >= 0 { one << exp as u32 } else { one >> exp.unsigned_abs() })
    }

    /// Parses a plain decimal literal (`-1.25`, `3e-4`) rounded to nearest at `prec`.
    pub fn parse_decimal(s: &str, prec: Precision) -> Result<Self> {
        let t = s.trim();
        if !is_decimal_literal(t) {
            return Err(Error::Parse(s.to_string()));
        }
        let parsed = Float::parse(t).map_err(|_| Error::Parse(s.to_string()))?;
        Ok(BigScalar(Float::with_val(prec.bits(), parsed)))
    }

    pub fn prec(&self) -> Precision {
        Precision(self.0.prec())
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn into_float(self) -> Float {
        self.0
    }

    pub fn with_prec(&self, prec: Precision) -> Self {
        BigScalar(Float::with_val(prec.bits(), &self.0))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn abs(&self) -> Self {
        BigScalar(self.0.clone().abs())
    }

    pub fn sqrt(&self) -> Self {
        BigScalar(self.0.clone().sqrt())
    }

    pub fn square(&self) -> Self {
        BigScalar(self.0.clone().square())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Less)
    }

    pub fn is_positive(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Greater)
    }

    /// -1, 0 or 1.
    pub fn signum(&self) -> i8 {
        match self.0.cmp0() {
            Some(Ordering::Less) => -1,
            Some(Ordering::Greater) => 1,
            _ => 0,
        }
    }

    pub fn max_of(&self, other: &Self) -> Self {
        if self >= other { self.clone() } else { other.clone() }
    }

    pub fn min_of(&self, other: &Self) -> Self {
        if self <= other { self.clone() } else { other.clone() }
    }

    /// `log2 |x|` as a double; `-inf` for zero.
    pub fn log2_abs(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (m, e) = self.0.to_f64_exp();
        m.abs().log2() + e as f64
    }

    /// Significant decimal digits needed to round-trip `bits` of mantissa.
    pub fn roundtrip_digits(prec: Precision) -> usize {
        (prec.bits() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 2
    }

    /// Decimal representation that parses back to the same value at `self.prec()`.
    pub fn to_decimal(&self) -> String {
        self.to_decimal_digits(Self::roundtrip_digits(self.prec()))
    }

    pub fn to_decimal_digits(&self, digits: usize) -> String {
        if self.0.is_zero() {
            return "0".to_string();
        }
        self.0.to_string_radix(10, Some(digits.max(1)))
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr<&BigScalar> for &BigScalar {
            type Output = BigScalar;
            fn $m(self, rhs: &BigScalar) -> BigScalar {
                let p = self.0.prec().max(rhs.0.prec());
                BigScalar(Float::with_val(p, (&self.0).$m(&rhs.0)))
            }
        }
        impl $tr<BigScalar> for &BigScalar {
            type Output = BigScalar;
            fn $m(self, rhs: BigScalar) -> BigScalar {
                self.$m(&rhs)
            }
        }
        impl $tr<&BigScalar> for BigScalar {
            type Output = BigScalar;
            fn $m(self, rhs: &BigScalar) -> BigScalar {
                (&self).$m(rhs)
            }
        }
        impl $tr<BigScalar> for BigScalar {
            type Output = BigScalar;
            fn $m(self, rhs: BigScalar) -> BigScalar {
                (&self).$m(&rhs)
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for BigScalar {
    type Output = BigScalar;
    fn neg(self) -> BigScalar {
        BigScalar(-self.0)
    }
}

impl Neg for &BigScalar {
    type Output = BigScalar;
    fn neg(self) -> BigScalar {
        BigScalar(-self.0.clone())
    }
}

impl fmt::Debug for BigScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.to_decimal_digits(24), self.0.prec())
    }
}

impl fmt::Display for BigScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

#[derive(Serialize, Deserialize)]
struct ExactRepr {
    value: String,
    prec_bits: u32,
}

impl Serialize for BigScalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ExactRepr { value: self.to_decimal(), prec_bits: self.0.prec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BigScalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ExactRepr::deserialize(d)?;
        let p = Precision::new(r.prec_bits).map_err(serde::de::Error::custom)?;
        BigScalar::parse_decimal(&r.value, p).map_err(serde::de::Error::custom)
    }
}

/// A closed real interval with `lo < hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct RInterval {
    lo: BigScalar,
    hi: BigScalar,
}

impl RInterval {
    pub fn new(lo: BigScalar, hi: BigScalar) -> Result<Self> {
        if lo < hi {
            Ok(RInterval { lo, hi })
        } else {
            Err(Error::InvalidInterval(format!("[{lo:?}, {hi:?}]")))
        }
    }

    /// `[-half, half]`.
    pub fn symmetric(half: BigScalar) -> Result<Self> {
        let h = half.abs();
        Self::new(-&h, h)
    }

    pub fn lo(&self) -> &BigScalar {
        &self.lo
    }

    pub fn hi(&self) -> &BigScalar {
        &self.hi
    }

    pub fn len(&self) -> BigScalar {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> BigScalar {
        let s = &self.lo + &self.hi;
        BigScalar(s.0 / 2u32)
    }

    pub fn prec(&self) -> Precision {
        self.lo.prec().max(self.hi.prec())
    }

    /// Membership in the open interval.
    pub fn contains(&self, x: &BigScalar) -> bool {
        &self.lo < x && x < &self.hi
    }

    pub fn contains_closed(&self, x: &BigScalar) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// `other ⊂ interior(self)`.
    pub fn contains_strictly(&self, other: &RInterval) -> bool {
        self.lo < other.lo && other.hi < self.hi
    }

    pub fn disjoint_from(&self, other: &RInterval) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }

    /// Distance from `x` to the nearer endpoint (negative outside).
    pub fn boundary_distance(&self, x: &BigScalar) -> BigScalar {
        (x - &self.lo).min_of(&(&self.hi - x))
    }

    /// `|lo + hi| <= 2^-(bits - slack) * |self|` at the interval's precision.
    pub fn is_symmetric(&self, slack: u32) -> bool {
        let tol = self.prec().tolerance(slack) * self.len();
        (&self.lo + &self.hi).abs() <= tol
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.lo.to_f64(), self.hi.to_f64())
    }
}

#[derive(Serialize, Deserialize)]
struct IntervalRepr {
    lo: String,
    hi: String,
    prec_bits: u32,
}

impl Serialize for RInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        IntervalRepr {
            lo: self.lo.to_decimal_digits(BigScalar::roundtrip_digits(self.prec())),
            hi: self.hi.to_decimal_digits(BigScalar::roundtrip_digits(self.prec())),
            prec_bits: self.prec().bits(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = IntervalRepr::deserialize(d)?;
        let p = Precision::new(r.prec_bits).map_err(D::Error::custom)?;
        let lo = BigScalar::parse_decimal(&r.lo, p).map_err(D::Error::custom)?;
        let hi = BigScalar::parse_decimal(&r.hi, p).map_err(D::Error::custom)?;
        RInterval::new(lo, hi).map_err(D::Error::custom)
    }
}
