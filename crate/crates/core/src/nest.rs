use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::UnimodalMap;
use crate::orbit::{
    first_landing_time, pullback_component, LandingResult, Membership, OrbitCache,
    DEFAULT_ORBIT_CAP,
};
use crate::scalar::{BigScalar, Precision, RInterval};

/// Why a nest stopped before `max_levels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NonRecurrent,
    Renormalizable,
    PrecisionExhausted,
}

/// Central or non-central return of a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centrality {
    Central,
    NonCentral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestConfig {
    pub max_levels: usize,
    pub orbit_cap: usize,
    /// Iterates of `g_n` the critical orbit must stay in `I^n` to count as trapped.
    pub persistence: usize,
    pub prec_start: Precision,
    pub prec_max: Precision,
}

impl Default for NestConfig {
    fn default() -> Self {
        NestConfig {
            max_levels: 16,
            orbit_cap: DEFAULT_ORBIT_CAP,
            persistence: 64,
            prec_start: Precision::DEFAULT,
            prec_max: Precision::new(4096).expect("static"),
        }
    }
}

impl NestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_levels < 1 {
            return Err(Error::Config("max_levels must be at least 1".into()));
        }
        if self.orbit_cap < 1 || self.persistence < 1 {
            return Err(Error::Config("caps must be at least 1".into()));
        }
        if self.prec_start > self.prec_max {
            return Err(Error::Config("precision_start exceeds precision_max".into()));
        }
        Ok(())
    }
}

/// One level `I^n` of the principal nest.
///
/// `central` records whether `g_n(0) = f^{r_n}(0)` lies in `I^n`; by the
/// return-time law this decides whether `r_{n+1} = r_n`. Level 0 carries no
/// return and is stored with `return_time = 0`, `central = false`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestLevel {
    pub n: usize,
    pub interval: RInterval,
    pub return_time: usize,
    pub central: bool,
    /// `g_n(0)`; absent at level 0.
    pub landing: Option<BigScalar>,
    /// The pullback did not shrink (`I^n = I^{n-1}` up to rounding): the first
    /// return map is a renormalization of `f`.
    pub degenerate: bool,
    pub terminated_by: Option<Termination>,
}

/// The principal nest `I^0 ⊃ I^1 ⊃ ...` of a map.
#[derive(Clone, Debug)]
pub struct Nest {
    map: UnimodalMap,
    levels: Vec<NestLevel>,
    alpha: BigScalar,
    config: NestConfig,
    orbit: OrbitCache,
}

impl Nest {
    /// The map at the precision the nest was built with.
    pub fn map(&self) -> &UnimodalMap {
        &self.map
    }

    pub fn levels(&self) -> &[NestLevel] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&NestLevel> {
        self.levels.get(n).ok_or(Error::MissingLevel(n))
    }

    pub fn alpha(&self) -> &BigScalar {
        &self.alpha
    }

    pub fn config(&self) -> &NestConfig {
        &self.config
    }

    /// Working precision of the final (successful) build.
    pub fn precision(&self) -> Precision {
        self.map.precision()
    }

    /// Deepest strictly nested level.
    pub fn depth(&self) -> usize {
        self.levels.iter().rev().find(|l| !l.degenerate).map_or(0, |l| l.n)
    }

    pub fn terminated_by(&self) -> Option<Termination> {
        self.levels.last().and_then(|l| l.terminated_by)
    }

    /// A copy of the critical-orbit cache, for further orbit queries.
    pub fn orbit_cache(&self) -> OrbitCache {
        self.orbit.clone()
    }
}

enum Attempt {
    Done(Nest),
    /// The build needs more precision; `partial` holds the levels that were
    /// completed within the current one.
    Escalate { partial: Nest, required: u32 },
    Exhausted(Nest),
}

/// Builds the principal nest of `f`.
///
/// The working precision starts at `prec_start` and must stay above
/// `prec_start + 8 Σ log2(1/λ_m)`; whenever a level breaks that bound, or an
/// orbit point grazes an interval boundary, the whole nest is rebuilt from
/// scratch at a higher precision. Errors are returned only for invalid
/// configurations; every other stop is recorded in `terminated_by`.
pub fn build_nest(f: &UnimodalMap, config: &NestConfig) -> Result<Nest> {
    config.validate()?;
    let mut w = config.prec_start;
    // Levels certified by an earlier attempt stay valid when a later,
    // higher-precision attempt runs out before reaching them.
    let mut deepest: Option<Nest> = None;
    let exhausted = |partial: Nest, deepest: Option<Nest>| {
        let mut best = match deepest {
            Some(d) if d.levels.len() > partial.levels.len() => d,
            _ => partial,
        };
        mark_last(&mut best, Termination::PrecisionExhausted);
        Ok(best)
    };
    loop {
        match attempt(f, config, w) {
            Attempt::Done(nest) => return Ok(nest),
            Attempt::Exhausted(partial) => return exhausted(partial, deepest),
            Attempt::Escalate { partial, required } => {
                let grown = (w.bits() as u64 * 3 / 2) as u32;
                let next = Precision::rounded_up(required.max(grown));
                if next > config.prec_max {
                    return exhausted(partial, deepest);
                }
                if deepest.as_ref().is_none_or(|d| partial.levels.len() > d.levels.len()) {
                    deepest = Some(partial);
                }
                w = next;
            }
        }
    }
}

fn mark_last(nest: &mut Nest, t: Termination) {
    if let Some(last) = nest.levels.last_mut() {
        last.terminated_by = Some(t);
    }
}

fn attempt(f: &UnimodalMap, config: &NestConfig, w: Precision) -> Attempt {
    let map = f.at_precision(w);
    let orbit = OrbitCache::new(&map, w, config.prec_max.max(w)).expect("w <= prec_max");
    let alpha = map.alpha_fixed_point();
    let i0 = RInterval::new(alpha.clone(), -&alpha).expect("alpha < 0");
    let mut nest = Nest {
        map: map.clone(),
        levels: vec![NestLevel {
            n: 0,
            interval: i0,
            return_time: 0,
            central: false,
            landing: None,
            degenerate: false,
            terminated_by: None,
        }],
        alpha,
        config: config.clone(),
        orbit,
    };
    let mut log_sum = 0.0f64;
    let mut trapped = false;
    let mut central_run = 0usize;
    for n in 1..=config.max_levels {
        let prev = nest.levels[n - 1].interval.clone();
        let landing = match first_landing_time(&mut nest.orbit, &prev, config.orbit_cap) {
            Ok(l) => l,
            Err(_) => return Attempt::Exhausted(nest),
        };
        let r = match landing {
            LandingResult::Time(r) => r,
            LandingResult::NonRecurrent => {
                mark_last(&mut nest, Termination::NonRecurrent);
                return Attempt::Done(nest);
            }
            LandingResult::Ambiguous { .. } => {
                return Attempt::Escalate { partial: nest, required: w.doubled().bits() }
            }
        };
        let j = match pullback_component(&map, r, &prev, &mut nest.orbit) {
            Ok(j) => j,
            Err(Error::PrecisionExhausted { .. }) => return Attempt::Exhausted(nest),
            Err(_) => return Attempt::Escalate { partial: nest, required: w.doubled().bits() },
        };
        let central = match nest.orbit.membership(r, &j) {
            Ok(Membership::Inside) => true,
            Ok(Membership::Outside) => false,
            Ok(Membership::Boundary) => {
                return Attempt::Escalate { partial: nest, required: w.doubled().bits() }
            }
            Err(_) => return Attempt::Exhausted(nest),
        };
        let landing_point = nest.orbit.iterate(r).ok();
        let shrink_floor = prev.len() * (BigScalar::one(w) - w.tolerance(16));
        let degenerate = !prev.contains_strictly(&j) || j.len() >= shrink_floor;
        let mut level = NestLevel {
            n,
            interval: j,
            return_time: r,
            central,
            landing: landing_point,
            degenerate,
            terminated_by: None,
        };
        if degenerate {
            level.terminated_by = Some(Termination::Renormalizable);
            nest.levels.push(level);
            return Attempt::Done(nest);
        }
        log_sum -= (level.interval.len() / prev.len()).log2_abs();
        let required = config.prec_start.bits() as f64 + 8.0 * log_sum;
        if required > w.bits() as f64 {
            let required = required.ceil().min(u32::MAX as f64) as u32;
            return Attempt::Escalate { partial: nest, required };
        }
        nest.levels.push(level);
        if central {
            if central_run == 0 {
                trapped = stays_trapped(&mut nest, n, config.persistence);
            }
            central_run += 1;
            if trapped && central_run >= config.persistence {
                mark_last(&mut nest, Termination::Renormalizable);
                return Attempt::Done(nest);
            }
        } else {
            central_run = 0;
            trapped = false;
        }
    }
    if trapped {
        mark_last(&mut nest, Termination::Renormalizable);
    }
    Attempt::Done(nest)
}

/// Whether `g_n^j(0) = f^{j r_n}(0)` stays in `I^n` for `j = 1..=horizon`.
fn stays_trapped(nest: &mut Nest, n: usize, horizon: usize) -> bool {
    let level = &nest.levels[n];
    let (interval, r) = (level.interval.clone(), level.return_time);
    (1..=horizon).all(|j| matches!(nest.orbit.membership(j * r, &interval), Ok(Membership::Inside)))
}

/// Whether level `n`'s return is central (`g_n(0)` in `I^n`).
pub fn classify_level(nest: &Nest, n: usize) -> Result<Centrality> {
    if n == 0 {
        return Err(Error::MissingLevel(0));
    }
    let level = nest.level(n)?;
    Ok(if level.central { Centrality::Central } else { Centrality::NonCentral })
}

/// `λ_n = |I^n| / |I^{n-1}|` for every strictly nested level `n >= 1`; entry
/// `i` holds `λ_{i+1}`.
pub fn scaling_factors(nest: &Nest) -> Vec<BigScalar> {
    nest.levels
        .windows(2)
        .filter(|w| !w[1].degenerate)
        .map(|w| w[1].interval.len() / w[0].interval.len())
        .collect()
}

/// Levels `n >= 1` whose return is non-central, in increasing order.
pub fn noncentral_levels(nest: &Nest) -> Vec<usize> {
    nest.levels.iter().skip(1).filter(|l| !l.central).map(|l| l.n).collect()
}

/// Maximal runs of consecutive central levels as `(first level, length)`.
pub fn central_cascades(nest: &Nest) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for l in nest.levels.iter().skip(1) {
        match (l.central, start) {
            (true, None) => start = Some(l.n),
            (false, Some(s)) => {
                runs.push((s, l.n - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, nest.levels.len() - s));
    }
    runs
}
