use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{BigScalar, Precision};

/// Tag for the supported family of maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `f_a(x) = 1 - a + a x^2` on `[-1, 1]`.
    QuadraticNormalized,
}

/// Monotone lap of the map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
enum ParamSource {
    Decimal(String),
    Exact(BigScalar),
}

/// An even unimodal map `f_a(x) = 1 - a + a x^2` with `a` in `(3/2, 2]`.
///
/// The parameter is kept in its original form (decimal text or an exact binary
/// value) so the map can be re-instantiated at any precision without drift.
#[derive(Clone, Debug)]
pub struct UnimodalMap {
    a: BigScalar,
    c1: BigScalar,
    source: ParamSource,
    prec: Precision,
}

/// Builds the map for a decimal parameter string.
pub fn make_map(a: &str, prec: Precision) -> Result<UnimodalMap> {
    let text = a.trim();
    // Range check at a precision large enough to hold every digit of the input.
    let check_bits = Precision::rounded_up(64 + 4 * text.len() as u32);
    let exact = BigScalar::parse_decimal(text, check_bits)?;
    check_range(&exact, text)?;
    let value = BigScalar::parse_decimal(text, prec)?;
    Ok(UnimodalMap::assemble(value, ParamSource::Decimal(text.to_string()), prec))
}

fn check_range(a: &BigScalar, shown: &str) -> Result<()> {
    let p = a.prec();
    let lower = BigScalar::from_f64(1.5, p);
    let upper = BigScalar::from_i64(2, p);
    if a > &lower && a <= &upper {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(shown.to_string()))
    }
}

impl UnimodalMap {
    fn assemble(a: BigScalar, source: ParamSource, prec: Precision) -> Self {
        let c1 = &BigScalar::one(prec) - &a;
        UnimodalMap { a, c1, source, prec }
    }

    /// Map for an exact binary parameter (used by the parameter search).
    pub fn from_exact(a: BigScalar) -> Result<Self> {
        check_range(&a, &a.to_decimal())?;
        Ok(Self::from_exact_unchecked(a))
    }

    /// Same as [`from_exact`](Self::from_exact) without the range check; the
    /// search evaluates kneading data at the closed endpoint `a = 3/2`.
    pub(crate) fn from_exact_unchecked(a: BigScalar) -> Self {
        let prec = a.prec();
        Self::assemble(a.clone(), ParamSource::Exact(a), prec)
    }

    pub fn family(&self) -> Family {
        Family::QuadraticNormalized
    }

    pub fn param(&self) -> &BigScalar {
        &self.a
    }

    /// The parameter as text: the original decimal if there was one.
    pub fn param_text(&self) -> String {
        match &self.source {
            ParamSource::Decimal(s) => s.clone(),
            ParamSource::Exact(v) => v.to_decimal(),
        }
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// The same map with the parameter re-read at precision `prec`.
    pub fn at_precision(&self, prec: Precision) -> Self {
        let a = match &self.source {
            ParamSource::Decimal(s) => {
                BigScalar::parse_decimal(s, prec).expect("validated at construction")
            }
            ParamSource::Exact(v) => v.with_prec(prec.max(v.prec())),
        };
        Self::assemble(a, self.source.clone(), prec)
    }

    /// `f(0) = 1 - a`.
    pub fn critical_value(&self) -> &BigScalar {
        &self.c1
    }

    /// `f(x)` without a domain check, at the larger of the two precisions.
    pub fn apply(&self, x: &BigScalar) -> BigScalar {
        let mut v = Float::with_val(x.prec().max(self.prec).bits(), x.as_float());
        self.step(&mut v);
        BigScalar::from_float(v)
    }

    /// In-place `x <- f(x)` at the precision of `x`.
    pub(crate) fn step(&self, x: &mut Float) {
        x.square_mut();
        *x *= self.a.as_float();
        *x += self.c1.as_float();
    }

    /// `f^n(x)`.
    pub fn iterate(&self, x: &BigScalar, n: usize) -> BigScalar {
        let mut v = Float::with_val(x.prec().max(self.prec).bits(), x.as_float());
        for _ in 0..n {
            self.step(&mut v);
        }
        BigScalar::from_float(v)
    }

    /// `(f^n(x), (f^n)'(x))` by the chain rule.
    pub fn iterate_with_derivative(&self, x: &BigScalar, n: usize) -> (BigScalar, BigScalar) {
        let bits = x.prec().max(self.prec).bits();
        let mut v = Float::with_val(bits, x.as_float());
        let mut d = Float::with_val(bits, 1);
        let two_a = Float::with_val(bits, self.a.as_float() * 2u32);
        for _ in 0..n {
            d *= &v;
            d *= &two_a;
            self.step(&mut v);
        }
        (BigScalar::from_float(v), BigScalar::from_float(d))
    }

    /// `f`, `f'` or `f''` at `x` (order 0, 1, 2).
    pub fn eval(&self, x: &BigScalar, order: u8) -> Result<BigScalar> {
        let slack = BigScalar::one(self.prec) + self.prec.tolerance(8);
        if x.abs() > slack {
            return Err(Error::Domain(x.to_decimal_digits(20)));
        }
        let two_a = &self.a + &self.a;
        match order {
            0 => Ok(self.apply(x)),
            1 => Ok(&two_a * x),
            2 => Ok(two_a),
            k => Err(Error::UnsupportedOrder(k)),
        }
    }

    /// The orientation-reversing fixed point `α = (1 - a)/a`.
    pub fn alpha_fixed_point(&self) -> BigScalar {
        &self.c1 / &self.a
    }

    /// Preimage of `y` on the requested lap: `±sqrt((y - 1 + a)/a)`.
    pub fn branch_inverse(&self, y: &BigScalar, side: Side) -> Result<BigScalar> {
        let p = y.prec().max(self.prec);
        let mut t = y - &self.c1;
        if t.is_negative() {
            if t.abs() > p.tolerance(8) {
                return Err(Error::NoPreimage(y.to_decimal_digits(20)));
            }
            t = BigScalar::zero(p);
        }
        let x = (&t / &self.a).sqrt();
        Ok(match side {
            Side::Right => x,
            Side::Left => -x,
        })
    }

    /// `Sf(x) = -3/(2x^2)`.
    pub fn schwarzian(&self, x: &BigScalar) -> Result<BigScalar> {
        let p = x.prec().max(self.prec);
        if x.abs() < BigScalar::pow2(-((p.bits() / 2) as i32), p) {
            return Err(Error::SingularAtCritical);
        }
        let x2 = x.square();
        Ok(BigScalar::from_f64(-1.5, p) / x2)
    }
}
