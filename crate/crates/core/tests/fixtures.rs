//! Frozen values at fixed parameters, each backed by an independent
//! computation that runs alongside it.

mod common;

use common::*;
use pnest::geometry::parabolic_proximity;
use pnest::nest::{central_cascades, scaling_factors};
use pnest::renorm::{cascade_structure, combinatorics, essentially_equivalent};
use pnest::*;
use rug::Float;

/// `λ_1..λ_8` at the Fibonacci parameter.
const FIBONACCI_LAMBDAS: [&str; 8] = [
    "0.45494187504120667087",
    "0.28845215175257803390",
    "0.22890933113970416594",
    "0.17562300562852917751",
    "0.13805910454548838211",
    "0.10847725780396716187",
    "0.085924861671054057920",
    "0.068004690162367470168",
];

fn rel(a: &Float, b: &Float) -> f64 {
    Float::with_val(a.prec(), Float::with_val(a.prec(), a - b) / b).abs().to_f64()
}

/// Level intervals by bisection on the first-return predicate, never touching
/// the library's pullbacks.
fn oracle_lambdas(a: &str, levels: usize) -> Vec<Float> {
    let q = Quadratic::new(a, 512, 1024, 200);
    let zero = Float::new(512);
    let mut t = q.level_zero();
    let mut out = Vec::new();
    for _ in 0..levels {
        let r = (1..200).find(|&k| t.contains(&q.orbit[k])).expect("critical orbit lands");
        let tol = Float::with_val(512, t.len() >> 400u32);
        let i = q.component(&zero, &tol, |y| t.contains(y) && q.first_return(y, &t, r) == Some(r));
        out.push(Float::with_val(512, i.len() / t.len()));
        t = i;
    }
    out
}

#[test]
fn fibonacci_scaling_factors() {
    let oracle = oracle_lambdas(FIBONACCI, 8);
    let built = scaling_factors(&nest(FIBONACCI, 512, 8));
    for (k, frozen) in FIBONACCI_LAMBDAS.iter().enumerate() {
        let frozen = Float::with_val(512, Float::parse(frozen).unwrap());
        assert!(rel(&oracle[k], &frozen) < 1e-19, "oracle lambda {}", k + 1);
        assert!(rel(built[k].as_float(), &oracle[k]) < 1e-60, "lambda {}", k + 1);
    }
}

#[test]
fn fibonacci_scaling_factors_are_precision_independent() {
    let lo = scaling_factors(&nest(FIBONACCI, 512, 12));
    let hi = scaling_factors(&nest(FIBONACCI, 1024, 12));
    for (a, b) in lo.iter().zip(&hi) {
        assert!(rel(&Float::with_val(1024, a.as_float()), b.as_float()) < 1e-100);
    }
}

/// Roots of `f^3(x) = x` in `[lo, hi]` with their multipliers, from a sign
/// scan of the cubed map refined by bisection.
fn period_three(a: &str, lo: f64, hi: f64) -> Vec<(Float, Float)> {
    let q = Quadratic::new(a, 512, 512, 0);
    let a = Float::with_val(512, Float::parse(a).unwrap());
    let h = |x: &Float| Float::with_val(512, q.iterate(x, 3) - x);
    let grid = 20_000;
    let at = |i: usize| Float::with_val(512, lo + (hi - lo) * i as f64 / grid as f64);
    let mut roots = Vec::new();
    for i in 0..grid {
        let (mut l, mut r) = (at(i), at(i + 1));
        let sl = h(&l).is_sign_negative();
        if sl == h(&r).is_sign_negative() {
            continue;
        }
        for _ in 0..480 {
            let m = Float::with_val(512, &l + &r) / 2;
            if h(&m).is_sign_negative() == sl {
                l = m;
            } else {
                r = m;
            }
        }
        let mut mult = Float::with_val(512, 1);
        let mut x = l.clone();
        for _ in 0..3 {
            mult *= Float::with_val(512, &a * &x) * 2u32;
            x = q.f(&x);
        }
        roots.push((l, mult));
    }
    roots
}

#[test]
fn trapped_cascade_is_near_parabolic() {
    let n = nest(TRAPPED, 256, 24);
    assert_eq!(n.terminated_by(), Some(Termination::Renormalizable));
    let r: Vec<usize> = n.levels().iter().skip(1).map(|l| l.return_time).collect();
    assert!(r.iter().all(|&t| t == 3));
    assert_eq!(central_cascades(&n), [(1, 24)]);
    // The critical orbit never leaves I^1, so no second branch is witnessed.
    assert!(matches!(cascade_structure(&n, 1, 10_000), Err(Error::CapExceeded { .. })));

    let (lo, hi) = n.levels()[1].interval.to_f64_pair();
    let roots = period_three(TRAPPED, lo, hi);
    let near: Vec<_> = roots.iter().filter(|(_, m)| (m.to_f64() - 1.0).abs() < 0.2).collect();
    for level in [1, 12, 24] {
        let pp = parabolic_proximity(&n, level).unwrap();
        assert!(pp.low_return);
        assert!(pp.multipliers_agree(n.precision()));
        let hit = near.iter().find(|(x, _)| {
            Float::with_val(512, x - pp.fixed_point.as_float()).abs().to_f64() < 1e-60
        });
        let (_, m) = hit.expect("library fixed point is an oracle root");
        assert!(rel(&Float::with_val(512, pp.multiplier.as_float()), m) < 1e-60);
        assert!((pp.multiplier.to_f64() - 1.074_344_340_092_603_6).abs() < 1e-15);
    }
}

#[test]
fn escaping_cascade_is_finite_with_channel_transits() {
    let n = nest(ESCAPING, 256, 8);
    assert!(!n.levels()[0].central);
    assert!(n.levels()[1..].iter().all(|l| l.central));
    let (len, family) = cascade_structure(&n, 1, 10_000).unwrap();
    assert_eq!(len, 13);
    // Landing intervals march through the channel and back: transit times
    // rise to the cascade length on one side and fall on the other.
    let t: Vec<usize> = family.iter().skip(1).map(|l| l.transit_time).collect();
    let peak = t.iter().position(|&x| x == len).unwrap();
    assert!(t[..=peak].windows(2).all(|w| w[1] > w[0]));
    assert!(t[peak + 1..].windows(2).all(|w| w[1] < w[0]));
    assert_eq!(family[0].transit_time, len + 1);
    assert!(matches!(parabolic_proximity(&n, 1), Err(Error::NoFixedPoint { level: 1 })));
}

#[test]
fn short_cascade_is_far_from_parabolic() {
    // A single central return at a parameter away from any saddle-node.
    let n = nest("1.75", 256, 4);
    assert_eq!(n.terminated_by(), Some(Termination::Renormalizable));
    let pp = parabolic_proximity(&n, 1).unwrap();
    assert!((pp.multiplier.to_f64() - 1.0).abs() > 0.5);
}

#[test]
fn fibonacci_combinatorics_are_stable_under_perturbation() {
    // Change the 40th fractional digit.
    let mut digits: Vec<u8> = FIBONACCI.bytes().collect();
    digits[41] = if digits[41] == b'9' { b'8' } else { digits[41] + 1 };
    let perturbed = String::from_utf8(digits).unwrap();
    assert_ne!(perturbed, FIBONACCI);
    let a = nest(FIBONACCI, 512, 8);
    let b = nest(&perturbed, 512, 8);
    for l in 2..=6 {
        let ka = combinatorics(&a, l, 10_000).unwrap();
        let kb = combinatorics(&b, l, 10_000).unwrap();
        assert!(essentially_equivalent(&ka, &kb, 0), "level {l}");
    }
}
