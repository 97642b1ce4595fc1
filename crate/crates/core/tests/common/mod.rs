//! Test-only oracles that share no code with the library: plain `rug` floats,
//! forward iteration of single points and bisection.

#![allow(dead_code)]

use rug::Float;

use pnest::{build_nest, make_map, Nest, NestConfig, Precision, RInterval};

pub const FIBONACCI: &str = "1.956203499571624051414212184609857869191803942313292967686656";

/// Closed form of the period-3 saddle-node: a = (1 + 2 sqrt 2) / 2.
pub const SADDLE_NODE: &str = "1.914213562373095048801688724209698078570";
/// Just inside the period-3 window: the critical orbit stays trapped.
pub const TRAPPED: &str = "1.914223562373095048801688724209698078570";
/// Just outside: a finite central cascade followed by escape.
pub const ESCAPING: &str = "1.91391356237309504880168872420969807857";

/// Parameters whose first four levels are cheap enough to rebuild by brute force.
pub const ORACLE_FIXTURES: [&str; 10] = [
    FIBONACCI, "1.8932", "1.8728", "1.9305", "1.8689", "1.9029", "1.9368", "1.9355", "1.9327", "1.9347",
];

/// Orbit cap used with [`ORACLE_FIXTURES`].
pub const ORACLE_CAP: usize = 1000;

pub fn nest(a: &str, bits: u32, levels: usize) -> Nest {
    nest_capped(a, bits, NestConfig::default().prec_max.bits(), levels)
}

pub fn nest_capped(a: &str, bits: u32, max_bits: u32, levels: usize) -> Nest {
    let prec = Precision::new(bits).unwrap();
    let prec_max = Precision::new(max_bits).unwrap();
    let config = NestConfig { max_levels: levels, prec_start: prec, prec_max, ..NestConfig::default() };
    build_nest(&make_map(a, prec).unwrap(), &config).unwrap()
}

#[derive(Clone, Debug)]
pub struct Iv {
    pub lo: Float,
    pub hi: Float,
}

impl Iv {
    pub fn of(i: &RInterval, prec: u32) -> Iv {
        Iv { lo: Float::with_val(prec, i.lo().as_float()), hi: Float::with_val(prec, i.hi().as_float()) }
    }

    pub fn contains(&self, x: &Float) -> bool {
        *x > self.lo && *x < self.hi
    }

    pub fn len(&self) -> Float {
        Float::with_val(self.lo.prec(), &self.hi - &self.lo)
    }
}

/// `x -> 1 - a + a x^2` with its own critical orbit.
///
/// The orbit is computed at `orbit_prec`, enough for forward accuracy over its
/// whole length; single points are iterated at `prec`.
pub struct Quadratic {
    pub prec: u32,
    a: Float,
    pub orbit: Vec<Float>,
}

impl Quadratic {
    pub fn new(a: &str, prec: u32, orbit_prec: u32, orbit_len: usize) -> Quadratic {
        let exact = Float::with_val(orbit_prec.max(prec), Float::parse(a).unwrap());
        let long = Quadratic { prec: orbit_prec, a: exact.clone(), orbit: Vec::new() };
        let mut orbit = Vec::with_capacity(orbit_len);
        let mut x = Float::new(orbit_prec);
        for _ in 0..orbit_len {
            orbit.push(Float::with_val(prec, &x));
            x = long.f(&x);
        }
        Quadratic { prec, a: Float::with_val(prec, exact), orbit }
    }

    pub fn f(&self, x: &Float) -> Float {
        let sq = Float::with_val(self.prec, x * x);
        let t = Float::with_val(self.prec, &self.a * &sq);
        Float::with_val(self.prec, t + 1u32) - &self.a
    }

    pub fn iterate(&self, x: &Float, k: usize) -> Float {
        let mut y = Float::with_val(self.prec, x);
        for _ in 0..k {
            y = self.f(&y);
        }
        y
    }

    /// First `j` in `1..=cap` with `f^j(y)` in `t`.
    pub fn first_return(&self, y: &Float, t: &Iv, cap: usize) -> Option<usize> {
        let mut z = Float::with_val(self.prec, y);
        for j in 1..=cap {
            z = self.f(&z);
            if t.contains(&z) {
                return Some(j);
            }
        }
        None
    }

    /// `I^0 = [alpha, -alpha]` with `alpha = (1 - a) / a`.
    pub fn level_zero(&self) -> Iv {
        let alpha = Float::with_val(self.prec, 1 - Float::with_val(self.prec, &self.a)) / &self.a;
        Iv { hi: Float::with_val(self.prec, -&alpha), lo: alpha }
    }

    /// Times `k < len` with `f^k(0)` in `t`.
    pub fn visits(&self, t: &Iv) -> Vec<usize> {
        (0..self.orbit.len()).filter(|&k| t.contains(&self.orbit[k])).collect()
    }

    /// Maximal interval around `x` on which `same` holds, found by doubling
    /// steps outward and bisecting to `tol`, then checked on interior samples.
    pub fn component(&self, x: &Float, tol: &Float, same: impl Fn(&Float) -> bool) -> Iv {
        let lo = self.edge(x, tol, -1, &same);
        let hi = self.edge(x, tol, 1, &same);
        Iv { lo, hi }
    }

    fn edge(&self, x: &Float, tol: &Float, dir: i32, same: &impl Fn(&Float) -> bool) -> Float {
        let p = self.prec;
        let step = |h: &Float| Float::with_val(p, x + Float::with_val(p, h * dir));
        // Start coarse and halve until the first step stays inside.
        let mut h = Float::with_val(p, tol << 300u32);
        while h > *tol && !same(&step(&h)) {
            h >>= 8u32;
        }
        if h < *tol {
            h = Float::with_val(p, tol);
        }
        let mut good = Float::with_val(p, x);
        let mut bad = loop {
            let y = step(&h);
            if y.clone().abs() > 1 || !same(&y) {
                break y;
            }
            good = y;
            h *= 2;
        };
        loop {
            while Float::with_val(p, &bad - &good).abs() > *tol {
                let mid = Float::with_val(p, &good + &bad) / 2;
                if same(&mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            // A doubling step may have jumped a gap; look for an earlier failure.
            let span = Float::with_val(p, &good - x);
            let failing = (1..32).map(|i| Float::with_val(p, x + Float::with_val(p, &span * i) / 32)).position(|y| !same(&y));
            match failing {
                None => return good,
                Some(i) => {
                    bad = Float::with_val(p, x + Float::with_val(p, &span * (i + 1)) / 32);
                    good = Float::with_val(p, x + Float::with_val(p, &span * i) / 32);
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleBranch {
    pub domain: Iv,
    pub return_time: usize,
    pub witness: usize,
}

/// Sorts `items` so that the one witnessed at time 0 comes first and the rest
/// follow by increasing left endpoint.
pub fn label<T>(items: &mut [T], witness: impl Fn(&T) -> usize, lo: impl Fn(&T) -> Float) {
    items.sort_by(|a, b| {
        (witness(a) != 0).cmp(&(witness(b) != 0)).then(lo(a).partial_cmp(&lo(b)).unwrap())
    });
}

/// Branches of the first return map to `t` met by the critical orbit.
pub fn brute_branches(q: &Quadratic, t: &Iv, tol: &Float) -> Vec<OracleBranch> {
    let visits = q.visits(t);
    let mut found: Vec<OracleBranch> = Vec::new();
    for w in visits.windows(2) {
        let (tau, s) = (w[0], w[1] - w[0]);
        let x = &q.orbit[tau];
        if found.iter().any(|b| b.return_time == s && b.domain.contains(x)) {
            continue;
        }
        let domain = q.component(x, tol, |y| t.contains(y) && q.first_return(y, t, s) == Some(s));
        found.push(OracleBranch { domain, return_time: s, witness: tau });
    }
    label(&mut found, |b| b.witness, |b| b.domain.lo.clone());
    found
}

#[derive(Clone, Debug)]
pub struct OracleLanding {
    pub domain: Iv,
    pub transit: usize,
    pub target: usize,
    pub witness: usize,
}

/// Level-`n` data computed from scratch: the first landing time into
/// `I^{n-1}`, the branches, the landing family and the critical itineraries.
pub struct OracleLevel {
    /// `I^n`, the central branch domain.
    pub interval: Iv,
    pub return_time: usize,
    pub branches: Vec<OracleBranch>,
    pub family: Vec<OracleLanding>,
    pub itineraries: Vec<Vec<usize>>,
}

pub fn brute_level(q: &Quadratic, t: &Iv, tol: &Float) -> Result<OracleLevel, String> {
    let r = (1..q.orbit.len()).find(|&k| t.contains(&q.orbit[k])).ok_or("critical orbit does not land")?;
    let branches = brute_branches(q, t, tol);
    if branches.first().map(|b| b.witness) != Some(0) {
        return Err("no central branch".into());
    }
    let core = &branches[0].domain;
    let target_of = |z: &Float| branches.iter().skip(1).position(|b| b.domain.contains(z)).map(|i| i + 1);
    // (transit, target branch) of a point of `t` under iteration of the central branch.
    let signature = |y: &Float| -> Option<(usize, usize)> {
        if !t.contains(y) {
            return None;
        }
        let mut z = Float::with_val(q.prec, y);
        let mut j = 0;
        while core.contains(&z) {
            if j > 4 * q.orbit.len() {
                return None;
            }
            z = q.iterate(&z, r);
            j += 1;
        }
        target_of(&z).map(|b| (j, b))
    };
    let mut family: Vec<OracleLanding> = Vec::new();
    for tau in q.visits(t) {
        let x = &q.orbit[tau];
        let Some((j, b)) = signature(x) else { continue };
        if tau + j * r >= q.orbit.len() {
            continue;
        }
        if family.iter().any(|l| l.transit == j && l.domain.contains(x)) {
            continue;
        }
        if !core.contains(x) && family.iter().any(|l| l.target == b && l.transit == 0) {
            continue;
        }
        let domain = if j == 0 {
            branches[b].domain.clone()
        } else {
            q.component(x, tol, |y| signature(y) == Some((j, b)))
        };
        family.push(OracleLanding { domain, transit: j, target: b, witness: tau });
    }
    if !core.contains(&q.orbit[r]) {
        // Non-central level: the landing family is the set of branches.
        family = branches
            .iter()
            .enumerate()
            .map(|(i, b)| OracleLanding { domain: b.domain.clone(), transit: 0, target: i, witness: b.witness })
            .collect();
    }
    label(&mut family, |l| l.witness, |l| l.domain.lo.clone());
    if family.first().map(|l| l.witness) != Some(0) {
        return Err("critical point does not escape the central branch".into());
    }

    let landing_of = |z: &Float| family.iter().position(|l| l.domain.contains(z));
    let g_time = |s: usize| family[s].transit * r + branches[family[s].target].return_time;
    let horizon = q.orbit.len();
    let mut excursions: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut current: Option<(usize, Vec<usize>)> = None;
    let mut idx = 0;
    while let Some(s) = landing_of(&q.orbit[idx]) {
        if s == 0 {
            if let Some(e) = current.take() {
                excursions.push(e);
            }
            current = Some((idx, Vec::new()));
        }
        if let Some((_, it)) = current.as_mut() {
            it.push(s);
        }
        if idx + g_time(s) >= horizon {
            break;
        }
        idx += g_time(s);
    }
    // The G-itinerary of a point of L_0 until it comes back to L_0.
    let next = family[0].domain.clone();
    let itinerary = |y: &Float, max: usize| -> Option<Vec<usize>> {
        let mut z = Float::with_val(q.prec, y);
        let mut out = Vec::new();
        loop {
            let s = landing_of(&z)?;
            if s == 0 && !out.is_empty() {
                return Some(out);
            }
            if out.len() > max {
                return None;
            }
            out.push(s);
            z = q.iterate(&z, g_time(s));
        }
    };
    let mut domains: Vec<(Iv, Vec<usize>, usize)> = Vec::new();
    for (start, it) in excursions {
        let x = &q.orbit[start];
        if domains.iter().any(|d| d.0.contains(x)) {
            continue;
        }
        let len = it.len();
        let domain = q.component(x, tol, |y| next.contains(y) && itinerary(y, len).as_ref() == Some(&it));
        domains.push((domain, it, start));
    }
    label(&mut domains, |d| d.2, |d| d.0.lo.clone());
    Ok(OracleLevel {
        interval: branches[0].domain.clone(),
        return_time: r,
        branches,
        family,
        itineraries: domains.into_iter().map(|d| d.1).collect(),
    })
}

/// Compares levels `1..=depth` of the library's nest, branches and
/// combinatorics with the brute-force oracle. Returns the number of branch
/// domains compared.
pub fn oracle_check(a: &str, depth: usize, cap: usize) -> Result<usize, String> {
    use pnest::NestExplorer;
    let built = nest(a, 256, depth + 1);
    if built.depth() < depth {
        return Err(format!("nest depth {} < {depth}", built.depth()));
    }
    let bits = built.precision().bits();
    let mut ex = NestExplorer::new(&built, cap);
    let horizon = ex.horizon();
    let q = Quadratic::new(a, 2 * bits, 2 * bits + 2 * horizon as u32, horizon);
    let fmt = |x: &Float| x.to_string_radix(10, Some(12));
    let mut t = q.level_zero();
    let mut compared = 0;
    for n in 1..=depth {
        let tol_cmp = Float::with_val(q.prec, t.len() >> (bits - 16));
        let tol = Float::with_val(q.prec, t.len() >> (bits + 8));
        let near = |x: &Float, y: &pnest::BigScalar| Float::with_val(q.prec, x - y.as_float()).abs() <= tol_cmp;
        let o = brute_level(&q, &t, &tol).map_err(|e| format!("level {n}: oracle: {e}"))?;
        let level = built.level(n).map_err(|e| e.to_string())?;
        if o.return_time != level.return_time {
            return Err(format!("level {n}: r = {} vs oracle {}", level.return_time, o.return_time));
        }
        let branches = ex.branches(n).map_err(|e| format!("level {n}: {e}"))?;
        if branches.len() != o.branches.len() {
            return Err(format!("level {n}: {} branches vs oracle {}", branches.len(), o.branches.len()));
        }
        for (b, ob) in branches.iter().zip(&o.branches) {
            if b.return_time != ob.return_time {
                return Err(format!("level {n} branch {}: return {} vs {}", b.label, b.return_time, ob.return_time));
            }
            if !near(&ob.domain.lo, b.domain.lo()) || !near(&ob.domain.hi, b.domain.hi()) {
                return Err(format!(
                    "level {n} branch {}: [{}, {}] vs oracle [{}, {}]",
                    b.label,
                    b.domain.lo().to_decimal_digits(12),
                    b.domain.hi().to_decimal_digits(12),
                    fmt(&ob.domain.lo),
                    fmt(&ob.domain.hi)
                ));
            }
            compared += 1;
        }
        if n < depth {
            let rec = ex.combinatorics(n).map_err(|e| format!("level {n}: {e}"))?;
            let mut order: Vec<usize> = (0..o.family.len()).collect();
            order.sort_by(|&i, &j| o.family[i].domain.lo.partial_cmp(&o.family[j].domain.lo).unwrap());
            if rec.ordering != order {
                return Err(format!("level {n}: ordering {:?} vs oracle {:?}", rec.ordering, order));
            }
            if rec.itineraries != o.itineraries {
                return Err(format!(
                    "level {n}: itineraries {:?} vs oracle {:?}",
                    rec.itineraries, o.itineraries
                ));
            }
        }
        t = o.interval;
    }
    Ok(compared)
}

/// Deterministic sample for the invariant suite: an 800-point grid on
/// (1.6, 2.0), built to 8 levels at 256 bits.
pub fn invariant_sample() -> Vec<(String, Nest)> {
    (1..800)
        .map(|i| format!("{:.4}", 1.6 + 0.4 * i as f64 / 800.0))
        .map(|a| {
            let n = nest(&a, 256, 8);
            (a, n)
        })
        .collect()
}

/// Nesting, 0-symmetry, boundary equivariance and the return-time law on
/// every strictly nested level, with landing times and endpoint images
/// recomputed by the oracle. Returns the number of levels checked.
pub fn invariant_check(a: &str, built: &Nest) -> Result<usize, String> {
    let bits = built.precision().bits();
    let levels: Vec<_> = built.levels().iter().filter(|l| !l.degenerate).collect();
    let r_max = levels.iter().map(|l| l.return_time).max().unwrap_or(0);
    let q = Quadratic::new(a, 2 * bits + 2 * r_max as u32, 2 * bits + 2 * r_max as u32, r_max + 1);
    let mut checked = 0;
    for w in levels.windows(2) {
        let (prev, l) = (w[0], w[1]);
        let n = l.n;
        let t = Iv::of(&prev.interval, q.prec);
        let i = Iv::of(&l.interval, q.prec);
        let tol = Float::with_val(q.prec, t.len() >> (bits - 16));
        if !(i.lo > t.lo && i.hi < t.hi) {
            return Err(format!("level {n}: not nested in level {}", n - 1));
        }
        let asym = Float::with_val(q.prec, &i.lo + &i.hi).abs();
        if asym > Float::with_val(q.prec, i.len() >> (bits - 16)) {
            return Err(format!("level {n}: not symmetric about 0"));
        }
        let r = (1..=r_max).find(|&k| t.contains(&q.orbit[k]));
        if r != Some(l.return_time) {
            return Err(format!("level {n}: r = {} but oracle landing {:?}", l.return_time, r));
        }
        for end in [&i.lo, &i.hi] {
            let y = q.iterate(end, l.return_time);
            let d = Float::with_val(q.prec, &y - &t.lo).abs().min(&Float::with_val(q.prec, &y - &t.hi).abs());
            if d > tol {
                return Err(format!("level {n}: f^r of an endpoint misses the boundary by {}", d.to_f64()));
            }
        }
        let central = i.contains(&q.orbit[l.return_time]);
        if central != l.central {
            return Err(format!("level {n}: central flag {} vs oracle {central}", l.central));
        }
        if let Some(next) = built.levels().get(n + 1).filter(|x| !x.degenerate) {
            let same = next.return_time == l.return_time;
            if same != l.central || next.return_time < l.return_time {
                return Err(format!(
                    "levels {n}, {}: r = {}, {} with central = {}",
                    n + 1,
                    l.return_time,
                    next.return_time,
                    l.central
                ));
            }
        }
        checked += 1;
    }
    Ok(checked)
}
