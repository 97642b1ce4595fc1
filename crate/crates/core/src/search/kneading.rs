use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::UnimodalMap;
use crate::scalar::{BigScalar, Precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    L,
    C,
    R,
}

impl Symbol {
    fn position(self) -> u8 {
        match self {
            Symbol::L => 0,
            Symbol::C => 1,
            Symbol::R => 2,
        }
    }

    fn as_char(self) -> char {
        match self {
            Symbol::L => 'L',
            Symbol::C => 'C',
            Symbol::R => 'R',
        }
    }
}

/// Itinerary of the critical value: symbol `k` (from 1) locates `f^k(0)`.
/// `C` can only appear as the last symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KneadingSequence {
    symbols: Vec<Symbol>,
}

impl KneadingSequence {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if let Some(i) = symbols.iter().position(|&s| s == Symbol::C) {
            if i + 1 != symbols.len() {
                return Err(Error::Parse("C may only terminate a kneading sequence".into()));
            }
        }
        Ok(KneadingSequence { symbols })
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn truncated(&self, len: usize) -> Self {
        KneadingSequence { symbols: self.symbols[..len.min(self.symbols.len())].to_vec() }
    }

    /// Signed lexicographic comparison over the common prefix.
    ///
    /// Positions are ordered `L < C < R`; each `L` in the agreeing prefix
    /// reverses the order, since `f` reverses orientation on the left lap.
    /// Sequences that agree on their common length compare `Equal`.
    pub fn cmp_signed(&self, other: &Self) -> Ordering {
        signed_order(&self.symbols, &other.symbols)
    }
}

fn signed_order(a: &[Symbol], b: &[Symbol]) -> Ordering {
    let mut flipped = false;
    for (&s, &t) in a.iter().zip(b) {
        if s != t {
            let o = s.position().cmp(&t.position());
            return if flipped { o.reverse() } else { o };
        }
        if s == Symbol::L {
            flipped = !flipped;
        }
    }
    Ordering::Equal
}

impl fmt::Display for KneadingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.symbols.iter().map(|s| s.as_char()).collect();
        f.write_str(&s)
    }
}

impl FromStr for KneadingSequence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                'L' | 'l' => Ok(Symbol::L),
                'R' | 'r' => Ok(Symbol::R),
                'C' | 'c' => Ok(Symbol::C),
                _ => Err(Error::Parse(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        KneadingSequence::new(symbols)
    }
}

impl TryFrom<String> for KneadingSequence {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KneadingSequence> for String {
    fn from(k: KneadingSequence) -> String {
        k.to_string()
    }
}

/// Kneading sequence generated by a kneading map `q` (with `q(k) < k`).
///
/// Cutting times satisfy `S_0 = 1`, `S_k = S_{k-1} + S_{q(k)}`, and each new
/// block repeats the first `S_{q(k)}` symbols with the last one flipped.
pub fn from_kneading_map(q: impl Fn(usize) -> usize, len: usize) -> KneadingSequence {
    // 1 encodes L, 0 encodes R.
    let mut nu: Vec<u8> = vec![1];
    let mut cut: Vec<usize> = vec![1];
    let mut k = 1;
    while nu.len() < len {
        let qk = q(k);
        assert!(qk < k, "kneading map must satisfy q(k) < k");
        let block = cut[qk];
        for j in 0..block {
            let mut v = nu[j];
            if j + 1 == block {
                v = 1 - v;
            }
            nu.push(v);
        }
        cut.push(cut[k - 1] + block);
        k += 1;
    }
    nu.truncate(len);
    let symbols = nu.into_iter().map(|v| if v == 1 { Symbol::L } else { Symbol::R }).collect();
    KneadingSequence { symbols }
}

/// Kneading sequence with the Fibonacci kneading map `q(k) = max(k - 2, 0)`.
pub fn fibonacci_kneading(len: usize) -> KneadingSequence {
    from_kneading_map(|k| k.saturating_sub(2), len)
}

/// Default working-precision ceiling for kneading evaluation.
pub const KNEADING_PREC_MAX: u32 = 1 << 16;

/// Kneading sequence of `f` up to `len` symbols.
///
/// Orbit points carry a running error bound. A point whose sign is not
/// certified forces a restart at doubled precision. A point certified to be
/// within `2^-(p - 16)` of 0, with `p` the map's precision, is an exact
/// critical hit and terminates the sequence with `C`.
pub fn kneading_sequence(f: &UnimodalMap, len: usize) -> Result<KneadingSequence> {
    kneading_until(f, len, None, KNEADING_PREC_MAX)
}

/// Kneading symbols of `f`, stopping early at the first disagreement with
/// `target` (the disagreeing symbol is included).
pub(crate) fn kneading_until(
    f: &UnimodalMap,
    len: usize,
    target: Option<&[Symbol]>,
    prec_max: u32,
) -> Result<KneadingSequence> {
    let guard_log2 = -(f.precision().bits() as f64 - 16.0);
    let mut w = f.precision();
    'restart: loop {
        let map = f.at_precision(w);
        let a = map.param().as_float();
        let log2_a = a.to_f64().log2();
        let round_log2 = -(w.bits() as f64 - 3.0);
        let mut x = Float::with_val(w.bits(), 0);
        let mut err = f64::NEG_INFINITY;
        let mut symbols = Vec::with_capacity(len.min(1 << 20));
        for k in 0..len {
            let lx = log2_abs(&x);
            // e' = a e (2|x| + e) + rounding
            let grow = log2_a + err + log_add(1.0 + lx, err);
            err = log_add(grow, round_log2);
            map.step(&mut x);
            let lx = log2_abs(&x);
            let sym = if lx <= guard_log2 && err <= guard_log2 {
                Symbol::C
            } else if lx <= err + 1.0 {
                let next = w.doubled();
                if next.bits() > prec_max {
                    return Err(Error::PrecisionExhausted { bits: w.bits() });
                }
                w = next;
                continue 'restart;
            } else if x.is_sign_negative() {
                Symbol::L
            } else {
                Symbol::R
            };
            symbols.push(sym);
            if sym == Symbol::C {
                break;
            }
            if let Some(t) = target {
                if k < t.len() && t[k] != sym {
                    break;
                }
            }
        }
        return Ok(KneadingSequence { symbols });
    }
}

fn log2_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let (m, e) = x.to_f64_exp();
    m.abs().log2() + e as f64
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + (lo - hi).exp2()).log2()
}

/// Signed comparison of the kneading sequence of the map with parameter `a`
/// against `target`, evaluated only as far as needed.
pub(crate) fn compare_param(
    a: &BigScalar,
    target: &KneadingSequence,
    prec_max: u32,
) -> Result<Ordering> {
    let map = UnimodalMap::from_exact_unchecked(a.clone());
    let k = kneading_until(&map, target.len(), Some(target.symbols()), prec_max)?;
    Ok(k.cmp_signed(target))
}

pub(crate) fn search_precision(digits: usize) -> Precision {
    Precision::rounded_up((digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::make_map;

    #[test]
    fn chebyshev_kneading() {
        let f = make_map("2", Precision::DEFAULT).unwrap();
        assert_eq!(kneading_sequence(&f, 5).unwrap().to_string(), "LRRRR");
    }

    #[test]
    fn fibonacci_prefix() {
        assert_eq!(
            fibonacci_kneading(40).to_string(),
            "LRRLLLRLLRRLRLRRLLLRRLRRLLLRLLRRLLLRRLLL"
        );
    }

    #[test]
    fn c_only_terminates() {
        assert!("LRC".parse::<KneadingSequence>().is_ok());
        assert!("LCR".parse::<KneadingSequence>().is_err());
        assert!("LXR".parse::<KneadingSequence>().is_err());
    }

    #[test]
    fn signed_order_flips_after_l() {
        let k = |s: &str| s.parse::<KneadingSequence>().unwrap();
        assert_eq!(k("R").cmp_signed(&k("L")), Ordering::Greater);
        assert_eq!(k("LR").cmp_signed(&k("LL")), Ordering::Less);
        assert_eq!(k("RR").cmp_signed(&k("RL")), Ordering::Greater);
        assert_eq!(k("LC").cmp_signed(&k("LR")), Ordering::Greater);
        assert_eq!(k("LRL").cmp_signed(&k("LR")), Ordering::Equal);
    }
}
