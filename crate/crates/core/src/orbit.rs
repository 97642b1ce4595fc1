use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Side, UnimodalMap};
use crate::scalar::{BigScalar, Precision, RInterval};

/// Default iteration cap for landing searches.
pub const DEFAULT_ORBIT_CAP: usize = 1_000_000;

/// The critical orbit `x_k = f^k(0)`, extended on demand.
///
/// Every point is computed at a working precision `w` and again at `2w`; the
/// two must agree to `2^-(target - 8)`. On disagreement the working precision
/// doubles (up to `max`) and the orbit is recomputed from scratch.
#[derive(Clone, Debug)]
pub struct OrbitCache {
    base_map: UnimodalMap,
    map: UnimodalMap,
    shadow_map: UnimodalMap,
    target: Precision,
    max: Precision,
    points: Vec<Float>,
    err_log2: Vec<f64>,
    shadow: Float,
    fixed_from: Option<usize>,
}

/// Position of an orbit point relative to an interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    /// Too close to an endpoint to decide at the current precision.
    Boundary,
}

/// Outcome of a first-landing search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandingResult {
    Time(usize),
    NonRecurrent,
    Ambiguous { at: usize },
}

impl OrbitCache {
    pub fn new(map: &UnimodalMap, target: Precision, max: Precision) -> Result<Self> {
        if target > max {
            return Err(Error::Config(format!("target {target} exceeds maximum {max}")));
        }
        let mut cache = OrbitCache {
            base_map: map.clone(),
            map: map.clone(),
            shadow_map: map.clone(),
            target,
            max,
            points: Vec::new(),
            err_log2: Vec::new(),
            shadow: Float::new(64),
            fixed_from: None,
        };
        cache.reset(target);
        Ok(cache)
    }

    fn reset(&mut self, working: Precision) {
        self.map = self.base_map.at_precision(working);
        self.shadow_map = self.base_map.at_precision(working.doubled());
        self.points = vec![Float::with_val(working.bits(), 0)];
        self.err_log2 = vec![f64::NEG_INFINITY];
        self.shadow = Float::with_val(working.doubled().bits(), 0);
        self.fixed_from = None;
    }

    /// The map at the current working precision.
    pub fn map(&self) -> &UnimodalMap {
        &self.map
    }

    pub fn target(&self) -> Precision {
        self.target
    }

    pub fn max_precision(&self) -> Precision {
        self.max
    }

    pub fn working(&self) -> Precision {
        self.map.precision()
    }

    /// Number of points currently cached.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index from which the orbit is exactly stationary, if detected.
    pub fn fixed_from(&self) -> Option<usize> {
        self.fixed_from
    }

    /// Makes `x_0..=x_k` available.
    pub fn ensure(&mut self, k: usize) -> Result<()> {
        let tol = -((self.target.bits() as f64) - 8.0);
        while self.points.len() <= k {
            let last = self.points.last().expect("orbit starts at 0");
            if let Some(j) = self.fixed_from {
                let v = last.clone();
                let e = self.err_log2[j];
                self.points.push(v);
                self.err_log2.push(e);
                continue;
            }
            let mut next = last.clone();
            self.map.step(&mut next);
            self.shadow_map.step(&mut self.shadow);
            let diff = Float::with_val(self.shadow.prec(), &next - &self.shadow);
            let err = if diff.is_zero() {
                f64::NEG_INFINITY
            } else {
                let (m, e) = diff.to_f64_exp();
                m.abs().log2() + e as f64
            };
            if err > tol {
                let w = self.working().doubled();
                if w > self.max {
                    return Err(Error::PrecisionExhausted { bits: self.working().bits() });
                }
                self.reset(w);
                continue;
            }
            if next == *last && diff.is_zero() {
                self.fixed_from = Some(self.points.len() - 1);
            }
            self.points.push(next);
            self.err_log2.push(err);
        }
        Ok(())
    }

    /// `f^k(0)`.
    pub fn iterate(&mut self, k: usize) -> Result<BigScalar> {
        self.ensure(k)?;
        Ok(BigScalar::from_float(self.points[k].clone()))
    }

    pub(crate) fn raw(&mut self, k: usize) -> Result<&Float> {
        self.ensure(k)?;
        Ok(&self.points[k])
    }

    /// Observed `log2 |x_k(w) - x_k(2w)|`; `-inf` when they coincide.
    pub fn error_log2(&mut self, k: usize) -> Result<f64> {
        self.ensure(k)?;
        Ok(self.err_log2[k])
    }

    /// Classifies `x_k` against the half-open interval `[lo, hi)`.
    ///
    /// An inexact point within `2^-(target - 16) |I|` (or within twice its
    /// observed error) of an endpoint is reported as [`Membership::Boundary`].
    /// Points the two precisions computed identically are treated as exact.
    pub fn membership(&mut self, k: usize, interval: &RInterval) -> Result<Membership> {
        self.ensure(k)?;
        let x = &self.points[k];
        let lo = interval.lo().as_float();
        let hi = interval.hi().as_float();
        let inside = x >= lo && x < hi;
        if self.err_log2[k] == f64::NEG_INFINITY {
            return Ok(if inside { Membership::Inside } else { Membership::Outside });
        }
        let d_lo = Float::with_val(64, x - lo).abs();
        let d_hi = Float::with_val(64, x - hi).abs();
        let d = if d_lo < d_hi { d_lo } else { d_hi };
        Ok(if self.near(k, &d, interval) {
            Membership::Boundary
        } else if inside {
            Membership::Inside
        } else {
            Membership::Outside
        })
    }

    fn near(&self, k: usize, d: &Float, interval: &RInterval) -> bool {
        if d.is_zero() {
            return true;
        }
        let (m, e) = d.to_f64_exp();
        let d_log = m.abs().log2() + e as f64;
        let rel = interval.len().log2_abs() - (self.target.bits() as f64 - 16.0);
        let err = self.err_log2[k] + 1.0;
        d_log <= rel.max(err)
    }
}

/// Minimal `r` in `1..=cap` with `f^r(0)` in `interval`.
pub fn first_landing_time(
    cache: &mut OrbitCache,
    interval: &RInterval,
    cap: usize,
) -> Result<LandingResult> {
    for k in 1..=cap {
        match cache.membership(k, interval)? {
            Membership::Inside => return Ok(LandingResult::Time(k)),
            Membership::Boundary => return Ok(LandingResult::Ambiguous { at: k }),
            Membership::Outside => {}
        }
        if let Some(j) = cache.fixed_from() {
            if k > j {
                break;
            }
        }
    }
    Ok(LandingResult::NonRecurrent)
}

/// Component of `f^-1(target)` containing the base point `q`.
pub fn preimage_component(
    map: &UnimodalMap,
    target: &RInterval,
    q: &BigScalar,
    step: usize,
) -> Result<RInterval> {
    let p = map.precision();
    let c = map.critical_value();
    if target.hi() < c {
        return Err(Error::PullbackEscapes { step });
    }
    let escape = |_| Error::PullbackEscapes { step };
    let comp = if target.lo() <= c {
        let w = map.branch_inverse(target.hi(), Side::Right).map_err(escape)?;
        RInterval::symmetric(w).map_err(escape)?
    } else {
        let u = map.branch_inverse(target.lo(), Side::Right).map_err(escape)?;
        let v = map.branch_inverse(target.hi(), Side::Right).map_err(escape)?;
        if q.is_negative() {
            RInterval::new(-v, -u).map_err(escape)?
        } else {
            RInterval::new(u, v).map_err(escape)?
        }
    };
    let slack = &comp.len() * &p.tolerance(16) + p.tolerance(8);
    let lo = comp.lo() - &slack;
    let hi = comp.hi() + &slack;
    if q < &lo || q > &hi {
        return Err(Error::PullbackEscapes { step });
    }
    Ok(comp)
}

/// Pulls `target` back along `base[0], .., base[m-1]`, where `base` is an orbit
/// segment whose image `f(base[m-1])` lies in `target`.
pub fn pullback_along_points(
    map: &UnimodalMap,
    base: &[BigScalar],
    target: &RInterval,
) -> Result<RInterval> {
    let mut j = target.clone();
    for (step, q) in base.iter().enumerate().rev() {
        j = preimage_component(map, &j, q, step)?;
    }
    Ok(j)
}

/// Component of `f^-r(target)` containing 0, pulled back along the cached
/// critical orbit.
pub fn pullback_component(
    map: &UnimodalMap,
    r: usize,
    target: &RInterval,
    cache: &mut OrbitCache,
) -> Result<RInterval> {
    pullback_along_orbit(map, cache, 0, r, target)
}

/// Component of `f^-(to - from)(target)` containing `x_from`, pulled back along
/// the cached critical orbit `x_from, .., x_{to-1}`.
pub fn pullback_along_orbit(
    map: &UnimodalMap,
    cache: &mut OrbitCache,
    from: usize,
    to: usize,
    target: &RInterval,
) -> Result<RInterval> {
    if to < from {
        return Err(Error::Config(format!("segment {from}..{to} is reversed")));
    }
    cache.ensure(to)?;
    let map = if map.precision() >= cache.working() { map.clone() } else { cache.map().clone() };
    let mut j = target.clone();
    for k in (from..to).rev() {
        let q = BigScalar::from_float(cache.raw(k)?.clone());
        j = preimage_component(&map, &j, &q, k - from)?;
    }
    Ok(j)
}

/// Component of `f^-steps(target)` containing the arbitrary base point `p`.
pub fn pullback_along_segment(
    map: &UnimodalMap,
    steps: usize,
    target: &RInterval,
    p: &BigScalar,
) -> Result<RInterval> {
    let mut base = Vec::with_capacity(steps);
    let mut x = p.with_prec(p.prec().max(map.precision()));
    for _ in 0..steps {
        let next = map.apply(&x);
        base.push(std::mem::replace(&mut x, next));
    }
    pullback_along_points(map, &base, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::make_map;

    fn p(bits: u32) -> Precision {
        Precision::new(bits).unwrap()
    }

    fn iv(lo: f64, hi: f64) -> RInterval {
        RInterval::new(BigScalar::from_f64(lo, p(128)), BigScalar::from_f64(hi, p(128))).unwrap()
    }

    fn cache(a: &str) -> OrbitCache {
        let f = make_map(a, p(128)).unwrap();
        OrbitCache::new(&f, p(128), p(4096)).unwrap()
    }

    #[test]
    fn chebyshev_orbit() {
        let mut c = cache("2");
        assert_eq!(c.iterate(1).unwrap().to_f64(), -1.0);
        assert_eq!(c.iterate(2).unwrap().to_f64(), 1.0);
        assert_eq!(c.iterate(3).unwrap().to_f64(), 1.0);
        assert_eq!(c.iterate(50).unwrap().to_f64(), 1.0);
        assert_eq!(c.fixed_from(), Some(2));
    }

    #[test]
    fn chebyshev_landings() {
        let mut c = cache("2");
        assert_eq!(
            first_landing_time(&mut c, &iv(-0.5, 0.5), DEFAULT_ORBIT_CAP).unwrap(),
            LandingResult::NonRecurrent
        );
        assert_eq!(
            first_landing_time(&mut c, &iv(-1.0, 1.0), DEFAULT_ORBIT_CAP).unwrap(),
            LandingResult::Time(1)
        );
        // Half-open semantics: the exact hit on the upper endpoint is outside.
        assert_eq!(
            first_landing_time(&mut c, &iv(-0.5, 1.0), DEFAULT_ORBIT_CAP).unwrap(),
            LandingResult::NonRecurrent
        );
    }

    #[test]
    fn chebyshev_pullbacks() {
        let f = make_map("2", p(128)).unwrap();
        let mut c = OrbitCache::new(&f, p(128), p(4096)).unwrap();
        let i = iv(-1.0, 0.0);
        assert_eq!(pullback_component(&f, 0, &i, &mut c).unwrap(), i);
        let j = pullback_component(&f, 1, &i, &mut c).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((j.hi().to_f64() - h).abs() < 1e-15 && j.is_symmetric(16));
        assert!(matches!(
            pullback_component(&f, 1, &iv(-0.5, 0.5), &mut c),
            Err(Error::PullbackEscapes { step: 0 })
        ));
        let k = pullback_along_segment(&f, 1, &iv(0.0, 1.0), &BigScalar::from_f64(-0.9, p(128)))
            .unwrap();
        assert_eq!(k.lo().to_f64(), -1.0);
        assert!((k.hi().to_f64() + h).abs() < 1e-15);
    }

    #[test]
    fn chaotic_orbit_escalates_precision() {
        let mut c = cache("1.9");
        c.ensure(400).unwrap();
        assert!(c.working() > p(128));
        let mut fresh = cache("1.9");
        let far = fresh.iterate(400).unwrap();
        let direct = make_map("1.9", p(1024)).unwrap().iterate(&BigScalar::zero(p(1024)), 400);
        assert!((far - direct).abs().log2_abs() < -100.0);
    }

    #[test]
    fn precision_ceiling_is_reported() {
        let f = make_map("1.9", p(128)).unwrap();
        let mut c = OrbitCache::new(&f, p(128), p(256)).unwrap();
        assert!(matches!(c.ensure(2000), Err(Error::PrecisionExhausted { .. })));
    }
}
