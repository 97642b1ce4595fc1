//! Scaling factors, commensurability of level pieces, decay fits and the
//! near-parabolic diagnostics of long central cascades.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nest::{central_cascades, scaling_factors, Nest};
use crate::renorm::{Branch, NestExplorer};
use crate::scalar::{BigScalar, Precision, RInterval};

/// Threshold for the small-factor trigger.
pub const DEFAULT_DELTA: f64 = 0.01;

/// Residual (max deviation of `ln λ` from the fitted line) up to which a fit
/// is accepted.
pub const FIT_RESIDUAL_MAX: f64 = 0.5;

pub const FIT_MIN_POINTS: usize = 4;

/// Index convention of [`GeometryReport::noncentral_lambdas`].
pub const INDEX_CONVENTION: &str = "k-th entry (k from 1) is lambda[n_k + 1], where n_k is the \
k-th level n >= 1 whose return is non-central (g_n(0) outside I^n)";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub rho: f64,
    pub residual: f64,
    pub points: usize,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum DecayOutcome {
    Fit(FitResult),
    InsufficientData { points: usize },
}

impl DecayOutcome {
    pub fn fit(&self) -> Option<&FitResult> {
        match self {
            DecayOutcome::Fit(f) => Some(f),
            DecayOutcome::InsufficientData { .. } => None,
        }
    }
}

/// Least-squares line through `(k, ln λ_k)`, `k = 1, 2, ...`.
///
/// `rho = exp(slope)`, `C = exp(intercept)`; the residual is the largest
/// absolute deviation from the line in log scale.
pub fn decay_fit(lambdas: &[f64]) -> Result<FitResult> {
    let m = lambdas.len();
    if m < FIT_MIN_POINTS {
        return Err(Error::InsufficientData { needed: FIT_MIN_POINTS, got: m });
    }
    if lambdas.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::Domain("scaling factors must be positive".into()));
    }
    let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let n = m as f64;
    let kbar = (n + 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dk = (i + 1) as f64 - kbar;
        sxy += dk * (y - ybar);
        sxx += dk * dk;
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * kbar;
    let residual = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y - intercept - slope * (i + 1) as f64).abs())
        .fold(0.0, f64::max);
    let rho = slope.exp();
    Ok(FitResult {
        c: intercept.exp(),
        rho,
        residual,
        points: m,
        accepted: residual <= FIT_RESIDUAL_MAX && rho < 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Trigger {
    /// `λ_n < δ` first at level `n`.
    Triggered { n: usize, delta: f64 },
    NotTriggered { delta: f64 },
}

impl Trigger {
    pub fn level(&self) -> Option<usize> {
        match self {
            Trigger::Triggered { n, .. } => Some(*n),
            Trigger::NotTriggered { .. } => None,
        }
    }
}

/// Smallest `N` with `λ_N < delta`; `lambdas[i]` is `λ_{i+1}`.
pub fn small_factor_trigger(lambdas: &[f64], delta: f64) -> Result<Trigger> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(match lambdas.iter().position(|&l| l < delta) {
        Some(i) => Trigger::Triggered { n: i + 1, delta },
        None => Trigger::NotTriggered { delta },
    })
}

/// Commensurability constant of one level: the largest `|T| / |piece|` over
/// the non-central branch domains and the gaps of `T` between all domains.
/// Gaps shorter than the working tolerance (adjacent domains) are skipped.
pub fn commensurability(t: &RInterval, branches: &[Branch]) -> f64 {
    let tl = t.len();
    let tol = &tl * &t.prec().tolerance(16);
    let mut worst = 0.0f64;
    let mut note = |piece: &BigScalar| {
        if piece > &tol {
            worst = worst.max((&tl / piece).to_f64());
        }
    };
    for b in branches.iter().filter(|b| b.label != 0) {
        note(&b.domain.len());
    }
    let mut doms: Vec<&RInterval> = branches.iter().map(|b| &b.domain).collect();
    doms.sort_by(|a, b| a.lo().partial_cmp(b.lo()).expect("finite"));
    let mut edge = t.lo().clone();
    for d in doms {
        note(&(d.lo() - &edge));
        if d.hi() > &edge {
            edge = d.hi().clone();
        }
    }
    note(&(t.hi() - &edge));
    worst
}

/// Smallest distance from a domain to `∂T`, relative to `|T|`.
pub fn extension_margin(t: &RInterval, branches: &[Branch]) -> f64 {
    let tl = t.len();
    branches
        .iter()
        .map(|b| {
            let d = (b.domain.lo() - t.lo()).min_of(&(t.hi() - b.domain.hi()));
            (d / &tl).to_f64()
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Near-parabolic data of `g_n | I^n` at a central level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicProximity {
    pub level: usize,
    pub cascade_length: usize,
    /// Outermost fixed point of `g_n` on its orientation-preserving lap.
    pub fixed_point: BigScalar,
    /// `(g_n)'` at the fixed point by the chain rule.
    pub multiplier: BigScalar,
    /// The same derivative by a central difference with step `2^-(bits/2)`.
    pub multiplier_fd: BigScalar,
    /// Sign of `g_n'` on the lap holding the fixed point.
    pub orientation: i8,
    /// `0 ∉ g_n(I^n)`.
    pub low_return: bool,
}

impl ParabolicProximity {
    /// `|multiplier - multiplier_fd| <= 2^-(bits/4)`.
    pub fn multipliers_agree(&self, bits: Precision) -> bool {
        let tol = BigScalar::pow2(-((bits.bits() / 4) as i32), bits);
        (&self.multiplier - &self.multiplier_fd).abs() <= tol
    }
}

const FIXED_POINT_GRID: usize = 1024;

pub fn parabolic_proximity(nest: &Nest, n: usize) -> Result<ParabolicProximity> {
    let level = nest.level(n)?;
    if n == 0 || !level.central {
        return Err(Error::Config(format!("level {n} is not a central level")));
    }
    let cascade_length = central_cascades(nest)
        .into_iter()
        .find(|&(s, len)| s <= n && n < s + len)
        .map_or(0, |(_, len)| len);
    let map = nest.map();
    let w = map.precision();
    let r = level.return_time;
    let b = level.interval.hi().clone();
    let g = |x: &BigScalar| map.iterate(x, r);
    // Orientation of g on the right half of I^n.
    let probe = &b * &BigScalar::from_f64(0.5, w);
    let (_, d) = map.iterate_with_derivative(&probe, r);
    let right = d.signum();
    // The orientation-preserving lap is [0, b] or [-b, 0].
    let outer = if right > 0 { b.clone() } else { -&b };
    let h = |x: &BigScalar| &g(x) - x;
    let s0 = h(&outer).signum();
    let mut prev = outer.clone();
    let mut bracket = None;
    for i in 1..=FIXED_POINT_GRID {
        let frac = BigScalar::from_f64(1.0 - i as f64 / FIXED_POINT_GRID as f64, w);
        let x = &outer * &frac;
        let s = h(&x).signum();
        if s == 0 {
            bracket = Some((x.clone(), x));
            break;
        }
        if s != s0 {
            bracket = Some((prev, x));
            break;
        }
        prev = x;
    }
    let (mut u, mut v) = bracket.ok_or(Error::NoFixedPoint { level: n })?;
    let stop = &b * &w.tolerance(16);
    let mut iters = 0;
    while (&u - &v).abs() > stop && iters < 4 * w.bits() {
        let mid = (&u + &v) * BigScalar::from_f64(0.5, w);
        if h(&mid).signum() == s0 {
            u = mid;
        } else {
            v = mid;
        }
        iters += 1;
    }
    let x = (&u + &v) * BigScalar::from_f64(0.5, w);
    let (_, multiplier) = map.iterate_with_derivative(&x, r);
    let step = BigScalar::pow2(-((w.bits() / 2) as i32), w);
    let multiplier_fd = (&g(&(&x + &step)) - &g(&(&x - &step))) / (&step + &step);
    let gb = g(&b);
    let g0 = g(&BigScalar::zero(w));
    let low_return = g0.signum() != 0 && g0.signum() == gb.signum();
    Ok(ParabolicProximity {
        level: n,
        cascade_length,
        fixed_point: x,
        orientation: multiplier.signum(),
        multiplier,
        multiplier_fd,
        low_return,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelGeometry {
    pub n: usize,
    pub central: bool,
    pub lambda: Option<f64>,
    pub branch_count: Option<usize>,
    pub c_geo: Option<f64>,
    pub extension_margin: Option<f64>,
    /// Why branch data is missing, if it is.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexedLambda {
    pub k: usize,
    pub level: usize,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    /// `lambdas[i] = λ_{i+1}`.
    pub lambdas: Vec<f64>,
    pub noncentral_lambdas: Vec<IndexedLambda>,
    pub index_convention: String,
    pub levels: Vec<LevelGeometry>,
    pub decay: DecayOutcome,
    pub trigger: Trigger,
    /// `C_geo` strictly increases over at least four consecutive levels.
    pub c_geo_growing: bool,
    pub parabolic: Vec<ParabolicProximity>,
}

/// `λ_{n_k+1}` for the non-central levels `n_k` (see [`INDEX_CONVENTION`]).
pub fn noncentral_lambdas(nest: &Nest) -> Vec<IndexedLambda> {
    let lam = scaling_factors(nest);
    let mut out = Vec::new();
    for l in nest.levels().iter().skip(1) {
        if l.central || l.degenerate {
            continue;
        }
        if let Some(v) = lam.get(l.n) {
            out.push(IndexedLambda { k: out.len() + 1, level: l.n + 1, lambda: v.to_f64() });
        }
    }
    out
}

/// Longest run of consecutive levels with strictly increasing values.
fn longest_increasing_run(values: &[(usize, f64)]) -> usize {
    let mut best = usize::from(!values.is_empty());
    let mut run = best;
    for w in values.windows(2) {
        if w[1].0 == w[0].0 + 1 && w[1].1 > w[0].1 {
            run += 1;
        } else {
            run = 1;
        }
        best = best.max(run);
    }
    best
}

/// Report over given per-level branch sets (`branches[i] = (n, result)`).
pub fn geometry_report(
    nest: &Nest,
    branches: &[(usize, Result<Vec<Branch>>)],
    delta: f64,
) -> Result<GeometryReport> {
    let lam: Vec<f64> = scaling_factors(nest).iter().map(BigScalar::to_f64).collect();
    let mut levels = Vec::new();
    for l in nest.levels().iter().skip(1) {
        let mut lg = LevelGeometry {
            n: l.n,
            central: l.central,
            lambda: if l.degenerate { None } else { lam.get(l.n - 1).copied() },
            branch_count: None,
            c_geo: None,
            extension_margin: None,
            note: None,
        };
        match branches.iter().find(|(n, _)| *n == l.n).map(|(_, b)| b) {
            Some(Ok(bs)) => {
                let t = &nest.level(l.n - 1)?.interval;
                lg.branch_count = Some(bs.len());
                lg.c_geo = Some(commensurability(t, bs));
                lg.extension_margin = Some(extension_margin(t, bs));
            }
            Some(Err(e)) => lg.note = Some(e.to_string()),
            None => lg.note = Some("branches not computed".into()),
        }
        levels.push(lg);
    }
    let nc = noncentral_lambdas(nest);
    let series: Vec<f64> = nc.iter().map(|x| x.lambda).collect();
    let decay = match decay_fit(&series) {
        Ok(f) => DecayOutcome::Fit(f),
        Err(Error::InsufficientData { got, .. }) => DecayOutcome::InsufficientData { points: got },
        Err(e) => return Err(e),
    };
    let trigger = small_factor_trigger(&lam, delta)?;
    let cg: Vec<(usize, f64)> =
        levels.iter().filter_map(|l| l.c_geo.map(|c| (l.n, c))).collect();
    let mut parabolic = Vec::new();
    for (start, len) in central_cascades(nest) {
        for n in start..start + len {
            if let Ok(p) = parabolic_proximity(nest, n) {
                parabolic.push(p);
            }
        }
    }
    Ok(GeometryReport {
        lambdas: lam,
        noncentral_lambdas: nc,
        index_convention: INDEX_CONVENTION.to_string(),
        levels,
        decay,
        trigger,
        c_geo_growing: longest_increasing_run(&cg) >= 4,
        parabolic,
    })
}

/// Discovers branches at every level with `explorer` and builds the report.
pub fn analyze_geometry(explorer: &mut NestExplorer<'_>, delta: f64) -> Result<GeometryReport> {
    let nest = explorer.nest();
    let levels: Vec<usize> = nest.levels().iter().skip(1).filter(|l| !l.degenerate).map(|l| l.n).collect();
    let branches: Vec<(usize, Result<Vec<Branch>>)> =
        levels.into_iter().map(|n| (n, explorer.branches(n))).collect();
    geometry_report(explorer.nest(), &branches, delta)
}
