//! Generalized return maps of the principal nest, central cascades and the
//! combinatorics extracted from them.

mod combinatorics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use combinatorics::{
    essential_bound, essentially_equivalent, Bound, CombinatoricsRecord, EssentialBound,
};

use crate::error::{Error, Result};
use crate::nest::Nest;
use crate::orbit::{pullback_along_orbit, Membership, OrbitCache};
use crate::scalar::{BigScalar, Precision, RInterval};

/// Default cap on critical-orbit times scanned for branch discovery.
pub const DEFAULT_RETURN_CAP: usize = 10_000;

/// One branch `I^n_i -> I^{n-1}` of the first return map at level `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: usize,
    pub domain: RInterval,
    pub return_time: usize,
    /// Sign of the derivative; for the central branch, on its right half.
    pub orientation: i8,
    /// Orbit time `τ` with `f^τ(0)` in the domain.
    pub witness: usize,
}

/// A landing interval `L^n_s` together with its transit data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingInterval {
    pub label: usize,
    pub domain: RInterval,
    /// Iterates of the central branch carrying the interval into its target.
    pub transit_time: usize,
    pub target_branch: usize,
    pub witness: usize,
}

/// The resolved structure of one level: branches plus the landing family on
/// which the Bernoulli map `G_n` is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStructure {
    pub n: usize,
    pub branches: Vec<Branch>,
    /// Number of consecutive central returns starting at this level.
    pub cascade_length: usize,
    pub family: Vec<LandingInterval>,
}

impl LevelStructure {
    /// `T^{n+1} = L^n_0`.
    pub fn next_interval(&self) -> &RInterval {
        &self.family[0].domain
    }

    pub fn branch(&self, label: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn landing(&self, label: usize) -> Option<&LandingInterval> {
        self.family.iter().find(|l| l.label == label)
    }

    fn landing_containing(&self, x: &BigScalar) -> Option<&LandingInterval> {
        self.family.iter().find(|l| l.domain.contains(x))
    }

    /// Iterates of `f` making up one application of `G_n` on `L^n_s`.
    pub fn bernoulli_time(&self, label: usize, r: usize) -> Option<usize> {
        let l = self.landing(label)?;
        let b = self.branch(l.target_branch)?;
        Some(l.transit_time * r + b.return_time)
    }
}

/// Lazily resolves branches, landing families and combinatorics of the levels
/// of one nest, sharing a single critical-orbit cache.
pub struct NestExplorer<'a> {
    nest: &'a Nest,
    cache: OrbitCache,
    cap: usize,
    /// Orbit times `< horizon` are certified; later ones are not used.
    horizon: usize,
    branch_sets: BTreeMap<usize, Vec<Branch>>,
    structures: BTreeMap<usize, LevelStructure>,
}

impl<'a> NestExplorer<'a> {
    pub fn new(nest: &'a Nest, cap: usize) -> Self {
        let mut cache = nest.orbit_cache();
        let mut horizon = 0;
        while horizon <= cap && cache.ensure(horizon).is_ok() {
            horizon += 1;
        }
        NestExplorer {
            nest,
            cache,
            cap,
            horizon,
            branch_sets: BTreeMap::new(),
            structures: BTreeMap::new(),
        }
    }

    pub fn nest(&self) -> &Nest {
        self.nest
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Number of leading orbit points available (bounded by the cap and by
    /// the precision ceiling).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn tolerance_bits(&self) -> Precision {
        self.nest.config().prec_start
    }

    /// Slack for endpoint comparisons inside `t`: data is only as accurate as
    /// the nest's working precision.
    fn overlap_tolerance(&self, t: &RInterval) -> BigScalar {
        t.len() * self.nest.precision().tolerance(16)
    }

    fn point(&mut self, k: usize) -> Result<BigScalar> {
        self.cache.iterate(k)
    }

    /// `f^k(x)` evaluated at the cache's working precision.
    fn apply_iterate(&self, x: &BigScalar, k: usize) -> BigScalar {
        let map = self.cache.map();
        map.iterate(&x.with_prec(x.prec().max(map.precision())), k)
    }

    /// Visits of the critical orbit to the interior of `t` within the horizon,
    /// stopping at the first boundary-grazing point.
    fn visits(&mut self, t: &RInterval) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for k in 0..self.horizon {
            match self.cache.membership(k, t)? {
                Membership::Inside => out.push(k),
                Membership::Outside => {}
                Membership::Boundary => break,
            }
        }
        Ok(out)
    }

    /// Branches of the first return map to `I^{n-1}` witnessed by the
    /// critical orbit.
    pub fn branches(&mut self, n: usize) -> Result<Vec<Branch>> {
        if !self.branch_sets.contains_key(&n) {
            let b = self.discover_branches(n)?;
            self.branch_sets.insert(n, b);
        }
        Ok(self.branch_sets[&n].clone())
    }

    fn discover_branches(&mut self, n: usize) -> Result<Vec<Branch>> {
        if n == 0 {
            return Err(Error::MissingLevel(0));
        }
        let level = self.nest.level(n)?.clone();
        let t = self.nest.level(n - 1)?.interval.clone();
        let map = self.nest.map().clone();
        let visits = self.visits(&t)?;
        let mut found: Vec<Branch> = Vec::new();
        for pair in visits.windows(2) {
            let (tau, next) = (pair[0], pair[1]);
            let s = next - tau;
            let x = self.point(tau)?;
            if found.iter().any(|b| b.return_time == s && b.domain.contains(&x)) {
                continue;
            }
            let domain = pullback_along_orbit(&map, &mut self.cache, tau, next, &t)?;
            let mut negatives = 0;
            for k in tau..next {
                if self.point(k)?.is_negative() {
                    negatives += 1;
                }
            }
            let orientation = if negatives % 2 == 0 { 1 } else { -1 };
            found.push(Branch { label: 0, domain, return_time: s, orientation, witness: tau });
        }
        let central_idx = found.iter().position(|b| b.witness == 0).ok_or_else(|| {
            Error::CapExceeded { cap: self.cap, what: format!("level {n} central return") }
        })?;
        if found[central_idx].return_time != level.return_time {
            return Err(Error::BranchCheck(format!(
                "central return time {} differs from r_{n} = {}",
                found[central_idx].return_time, level.return_time
            )));
        }
        // The central branch's domain is I^n by construction; keep the nest's copy.
        found[central_idx].domain = level.interval.clone();
        if found.len() < 2 {
            return Err(Error::CapExceeded {
                cap: self.cap,
                what: format!("fewer than two branches at level {n}"),
            });
        }
        label_by_position(&mut found, central_idx, |b, l| b.label = l, |b| b.domain.lo().clone());
        found.sort_by_key(|b| b.label);
        for b in found.iter().skip(1) {
            self.check_onto(b, &t)?;
        }
        check_disjoint(found.iter().map(|b| &b.domain), &self.overlap_tolerance(&t))?;
        Ok(found)
    }

    /// Endpoints of a non-central branch map onto `∂T` and 16 interior samples
    /// are strictly monotone under `f^s`.
    fn check_onto(&self, b: &Branch, t: &RInterval) -> Result<()> {
        let tol = t.len() * self.tolerance_bits().tolerance(16);
        let s = b.return_time;
        let lo_img = self.apply_iterate(b.domain.lo(), s);
        let hi_img = self.apply_iterate(b.domain.hi(), s);
        let (want_lo, want_hi) = if b.orientation > 0 { (t.lo(), t.hi()) } else { (t.hi(), t.lo()) };
        if (&lo_img - want_lo).abs() > tol || (&hi_img - want_hi).abs() > tol {
            return Err(Error::BranchCheck(format!(
                "branch {} (return {s}) does not map onto the level interval",
                b.label
            )));
        }
        let len = b.domain.len();
        let mut prev = lo_img;
        for i in 1..=16 {
            let frac = BigScalar::from_f64(i as f64 / 17.0, len.prec());
            let y = self.apply_iterate(&(b.domain.lo() + &(&len * &frac)), s);
            let step = (&y - &prev).signum();
            if step != b.orientation {
                return Err(Error::BranchCheck(format!("branch {} is not monotone", b.label)));
            }
            prev = y;
        }
        if (&hi_img - &prev).signum() != b.orientation {
            return Err(Error::BranchCheck(format!("branch {} is not monotone", b.label)));
        }
        Ok(())
    }

    /// Branches, cascade length and landing family of level `n`.
    pub fn structure(&mut self, n: usize) -> Result<&LevelStructure> {
        if !self.structures.contains_key(&n) {
            let s = self.resolve(n)?;
            self.structures.insert(n, s);
        }
        Ok(&self.structures[&n])
    }

    fn resolve(&mut self, n: usize) -> Result<LevelStructure> {
        let branches = self.branches(n)?;
        let level = self.nest.level(n)?.clone();
        if !level.central {
            let family = branches
                .iter()
                .map(|b| LandingInterval {
                    label: b.label,
                    domain: b.domain.clone(),
                    transit_time: 0,
                    target_branch: b.label,
                    witness: b.witness,
                })
                .collect();
            return Ok(LevelStructure { n, branches, cascade_length: 0, family });
        }
        let r = level.return_time;
        let core = level.interval.clone();
        let map = self.nest.map().clone();
        // Escape time of the critical point from the central branch.
        let mut t0 = 1;
        loop {
            if (t0 + 1) * r >= self.horizon {
                return Err(Error::EscapeNotFound { level: n, budget: self.horizon });
            }
            match self.cache.membership((t0 + 1) * r, &core)? {
                Membership::Inside => t0 += 1,
                Membership::Outside => break,
                Membership::Boundary => {
                    return Err(Error::Ambiguous(format!("cascade escape at level {n}")))
                }
            }
        }
        t0 += 1;
        let t = self.nest.level(n - 1)?.interval.clone();
        let mut family: Vec<LandingInterval> = branches
            .iter()
            .skip(1)
            .map(|b| LandingInterval {
                label: 0,
                domain: b.domain.clone(),
                transit_time: 0,
                target_branch: b.label,
                witness: b.witness,
            })
            .collect();
        let starts: Vec<usize> = self
            .visits(&t)?
            .into_iter()
            .filter(|&k| matches!(self.cache.membership(k, &core), Ok(Membership::Inside)))
            .collect();
        for tau in starts {
            let x = self.point(tau)?;
            let mut j = 1;
            let target = loop {
                let idx = tau + j * r;
                if idx >= self.horizon {
                    break None;
                }
                match self.cache.membership(idx, &core)? {
                    Membership::Inside => j += 1,
                    Membership::Outside => {
                        let y = self.point(idx)?;
                        break branches.iter().skip(1).find(|b| b.domain.contains(&y)).map(|b| (b, idx));
                    }
                    Membership::Boundary => break None,
                }
            };
            let Some((b, idx)) = target else { continue };
            if family.iter().any(|l| l.transit_time == j && l.domain.contains(&x)) {
                continue;
            }
            let domain = pullback_along_orbit(&map, &mut self.cache, tau, idx, &b.domain)?;
            family.push(LandingInterval {
                label: 0,
                domain,
                transit_time: j,
                target_branch: b.label,
                witness: tau,
            });
        }
        let zero = family.iter().position(|l| l.witness == 0).ok_or(Error::EscapeNotFound {
            level: n,
            budget: self.horizon,
        })?;
        debug_assert_eq!(family[zero].transit_time, t0);
        label_by_position(&mut family, zero, |l, s| l.label = s, |l| l.domain.lo().clone());
        family.sort_by_key(|l| l.label);
        check_disjoint(family.iter().map(|l| &l.domain), &self.overlap_tolerance(&t))?;
        Ok(LevelStructure { n, branches, cascade_length: t0 - 1, family })
    }

    /// One application of the Bernoulli map `G_n = g_n ∘ Ψ_n` at `x`.
    pub fn bernoulli_apply(&mut self, n: usize, x: &BigScalar) -> Result<(usize, BigScalar)> {
        let r = self.nest.level(n)?.return_time;
        let s = self.structure(n)?;
        let l = s.landing_containing(x).ok_or(Error::NotInDomain)?;
        let time = s.bernoulli_time(l.label, r).expect("labels are consistent");
        let label = l.label;
        Ok((label, self.apply_iterate(x, time)))
    }

    /// Combinatorics `κ(g_n)`: ordering of the landing family, itineraries of
    /// the next-level branches and depths.
    pub fn combinatorics(&mut self, n: usize) -> Result<CombinatoricsRecord> {
        let r = self.nest.level(n)?.return_time;
        let s = self.structure(n)?.clone();
        let map = self.nest.map().clone();
        let next = s.next_interval().clone();
        // Walk the critical orbit under G_n, cutting it into excursions from
        // T^{n+1} back to itself.
        let mut excursions: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        let mut idx = 0usize;
        let mut current: Option<(usize, Vec<usize>)> = None;
        loop {
            let x = self.point(idx)?;
            let Some(l) = s.landing_containing(&x) else { break };
            if l.label == 0 {
                if let Some((start, it)) = current.take() {
                    excursions.push((start, idx, it));
                }
                current = Some((idx, Vec::new()));
            }
            if let Some((_, it)) = current.as_mut() {
                it.push(l.label);
            }
            let step = s.bernoulli_time(l.label, r).expect("labels are consistent");
            if idx + step >= self.horizon {
                break;
            }
            idx += step;
        }
        if excursions.first().map(|e| e.0) != Some(0) {
            return Err(Error::CapExceeded {
                cap: self.cap,
                what: format!("critical itinerary at level {n} does not return"),
            });
        }
        struct Found {
            domain: RInterval,
            itinerary: Vec<usize>,
            witness: usize,
            label: usize,
        }
        let mut found: Vec<Found> = Vec::new();
        for (start, end, itinerary) in excursions {
            let x = self.point(start)?;
            if found.iter().any(|f| f.domain.contains(&x)) {
                continue;
            }
            let nested = self.nest.level(n + 1).ok().filter(|_| start == 0 && s.cascade_length == 0);
            let domain = match nested {
                Some(l) => l.interval.clone(),
                None => pullback_along_orbit(&map, &mut self.cache, start, end, &next)?,
            };
            found.push(Found { domain, itinerary, witness: start, label: 0 });
        }
        let central = found.iter().position(|f| f.witness == 0).expect("checked above");
        label_by_position(&mut found, central, |f, l| f.label = l, |f| f.domain.lo().clone());
        found.sort_by_key(|f| f.label);

        let mut ordering: Vec<(BigScalar, usize)> =
            s.family.iter().map(|l| (l.domain.lo().clone(), l.label)).collect();
        ordering.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let depths = self.depths(&s, r)?;
        Ok(CombinatoricsRecord {
            level: n,
            ordering: ordering.into_iter().map(|(_, l)| l).collect(),
            itineraries: found.into_iter().map(|f| f.itinerary).collect(),
            depths,
        })
    }

    /// `min(k_-, k_+)` per landing label.
    fn depths(&mut self, s: &LevelStructure, r: usize) -> Result<Vec<usize>> {
        let mut out = vec![0; s.family.len()];
        let standard = s.cascade_length == 0;
        for l in &s.family {
            let k_plus = if standard && l.label == 0 { None } else { Some(l.transit_time) };
            let mut k_minus = 0;
            for k in &s.family {
                if k.target_branch != l.target_branch || k.transit_time <= l.transit_time {
                    continue;
                }
                let d = k.transit_time - l.transit_time;
                let y = self.point(k.witness + d * r)?;
                if l.domain.contains(&y) {
                    k_minus = k_minus.max(d);
                }
            }
            out[l.label] = match k_plus {
                Some(kp) => kp.min(k_minus),
                None => k_minus,
            };
        }
        Ok(out)
    }
}

/// Assigns label 0 to `items[central]` and 1.. to the others by increasing
/// position.
fn label_by_position<T>(
    items: &mut [T],
    central: usize,
    set: impl Fn(&mut T, usize),
    pos: impl Fn(&T) -> BigScalar,
) {
    let mut order: Vec<usize> = (0..items.len()).filter(|&i| i != central).collect();
    order.sort_by(|&a, &b| pos(&items[a]).partial_cmp(&pos(&items[b])).expect("finite"));
    set(&mut items[central], 0);
    for (rank, i) in order.into_iter().enumerate() {
        set(&mut items[i], rank + 1);
    }
}

/// Domains may share endpoints; overlaps up to `tol` count as shared ones.
fn check_disjoint<'b>(domains: impl Iterator<Item = &'b RInterval>, tol: &BigScalar) -> Result<()> {
    let mut v: Vec<&RInterval> = domains.collect();
    v.sort_by(|a, b| a.lo().partial_cmp(b.lo()).expect("finite"));
    for w in v.windows(2) {
        if &(w[0].hi() - w[1].lo()) > tol {
            return Err(Error::BranchCheck("overlapping domains".into()));
        }
    }
    Ok(())
}

/// Branches of the first return map at level `n` (see [`NestExplorer`]).
pub fn return_map_domains(nest: &Nest, n: usize, cap: usize) -> Result<Vec<Branch>> {
    NestExplorer::new(nest, cap).branches(n)
}

/// Length of the central cascade starting at `n_start` and its landing family.
pub fn cascade_structure(
    nest: &Nest,
    n_start: usize,
    cap: usize,
) -> Result<(usize, Vec<LandingInterval>)> {
    if !nest.level(n_start)?.central {
        return Ok((0, Vec::new()));
    }
    let mut ex = NestExplorer::new(nest, cap);
    let s = ex.structure(n_start)?;
    Ok((s.cascade_length, s.family.clone()))
}

/// One application of `G_n` (see [`NestExplorer::bernoulli_apply`]).
pub fn bernoulli_map_apply(
    nest: &Nest,
    n: usize,
    x: &BigScalar,
    cap: usize,
) -> Result<(usize, BigScalar)> {
    NestExplorer::new(nest, cap).bernoulli_apply(n, x)
}

/// Combinatorics of level `n` (see [`NestExplorer::combinatorics`]).
pub fn combinatorics(nest: &Nest, n: usize, cap: usize) -> Result<CombinatoricsRecord> {
    NestExplorer::new(nest, cap).combinatorics(n)
}
