//! Parameter search: realizing a target combinatorics in the quadratic family
//! by bisection on the kneading order.

pub mod kneading;

use std::cmp::Ordering;

use rayon::prelude::*;
use rug::float::Round;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{make_map, UnimodalMap};
use crate::nest::{build_nest, Nest, NestConfig};
use crate::renorm::{essentially_equivalent, CombinatoricsRecord, NestExplorer, DEFAULT_RETURN_CAP};
use crate::scalar::{BigScalar, Precision};

pub use kneading::{
    fibonacci_kneading, from_kneading_map, kneading_sequence, KneadingSequence, Symbol,
    KNEADING_PREC_MAX,
};
use kneading::{compare_param, kneading_until, search_precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum NamedTarget {
    /// Every level non-central with a two-branch return map whose central
    /// branch lands in the non-central one, checked through `depth` levels.
    Fibonacci { depth: usize },
}

impl NamedTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fibonacci" => Ok(NamedTarget::Fibonacci { depth: 12 }),
            other => Err(Error::Config(format!("unknown named target {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SearchTarget {
    Named(NamedTarget),
    ExplicitRecords(Vec<CombinatoricsRecord>),
    KneadingPrefix(KneadingSequence),
}

impl SearchTarget {
    /// Named target or a JSON file body: either a single record, an array of
    /// records, or a serialized `SearchTarget`.
    pub fn from_text(text: &str) -> Result<Self> {
        let t = text.trim();
        if !t.starts_with('{') && !t.starts_with('[') {
            return Ok(SearchTarget::Named(NamedTarget::parse(t)?));
        }
        if let Ok(target) = serde_json::from_str::<SearchTarget>(t) {
            return Ok(target);
        }
        if let Ok(records) = serde_json::from_str::<Vec<CombinatoricsRecord>>(t) {
            return Ok(SearchTarget::ExplicitRecords(records));
        }
        let record: CombinatoricsRecord = serde_json::from_str(t)?;
        Ok(SearchTarget::ExplicitRecords(vec![record]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub digits: usize,
    /// Ceiling for kneading evaluation.
    pub prec_max: u32,
    pub nest: NestConfig,
    pub return_cap: usize,
    /// Grid size for the record-matching scan.
    pub grid: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            digits: 60,
            prec_max: KNEADING_PREC_MAX,
            nest: NestConfig::default(),
            return_cap: DEFAULT_RETURN_CAP,
            grid: 64,
        }
    }
}

impl SearchConfig {
    pub const MAX_DIGITS: usize = 2000;

    pub fn validate(&self) -> Result<()> {
        if self.digits == 0 || self.digits > Self::MAX_DIGITS {
            return Err(Error::Config(format!("digits must be in 1..={}", Self::MAX_DIGITS)));
        }
        if self.grid < 2 {
            return Err(Error::Config("grid must be at least 2".into()));
        }
        self.nest.validate()
    }

    fn step_cap(&self) -> usize {
        (4.0 * self.digits as f64 * std::f64::consts::LOG2_10).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub passed: bool,
    pub precision_bits: u32,
    pub levels_built: usize,
    pub levels_matched: usize,
    pub transcript: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// `a*` as a decimal with `digits` fractional digits.
    pub parameter: String,
    pub bracket: (String, String),
    pub steps: usize,
    /// Length of the kneading prefix the final bracket agrees on.
    pub kneading_prefix: usize,
    pub verification: Verification,
}

/// Finds a parameter realizing `target`, refining until the bracket is
/// narrower than `10^-digits`. The result is returned only after an
/// independent rebuild at doubled precision confirms it.
pub fn search_parameter(target: &SearchTarget, config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    match target {
        SearchTarget::Named(NamedTarget::Fibonacci { depth }) => {
            let (lo, hi, steps, len) = bisect_kneading(config, KneadingGoal::Point(fibonacci_kneading))?;
            let a = midpoint(&lo, &hi);
            let text = fixed_decimal(&a, config.digits, Round::Nearest);
            let verification = verify_fibonacci(&text, *depth, config)?;
            finish(text, &lo, &hi, steps, len, verification, config)
        }
        SearchTarget::KneadingPrefix(k) => {
            if k.is_empty() {
                return Err(Error::Config("empty kneading prefix".into()));
            }
            let (lo, hi, steps, len) = bisect_kneading(config, KneadingGoal::Prefix(k))?;
            let text = fixed_decimal(&hi, config.digits, Round::Up);
            let verification = verify_prefix(&text, k, config)?;
            finish(text, &lo, &hi, steps, len, verification, config)
        }
        SearchTarget::ExplicitRecords(records) => {
            for r in records {
                r.check_admissible(config.return_cap)?;
            }
            if records.is_empty() {
                return Err(Error::NotRealized { deepest: 0, reason: "no records".into() });
            }
            search_records(records, config)
        }
    }
}

fn finish(
    parameter: String,
    lo: &BigScalar,
    hi: &BigScalar,
    steps: usize,
    kneading_prefix: usize,
    verification: Verification,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    if !verification.passed {
        return Err(Error::NotRealized {
            deepest: verification.levels_matched,
            reason: verification.transcript.last().cloned().unwrap_or_default(),
        });
    }
    let d = config.digits + 4;
    Ok(SearchOutcome {
        parameter,
        bracket: (fixed_decimal(lo, d, Round::Down), fixed_decimal(hi, d, Round::Up)),
        steps,
        kneading_prefix,
        verification,
    })
}

enum KneadingGoal<'a> {
    /// A single parameter with the given infinite kneading sequence.
    Point(fn(usize) -> KneadingSequence),
    /// The lower end of the parameter interval realizing a finite prefix.
    Prefix(&'a KneadingSequence),
}

/// Bisection on the signed kneading order over `[3/2, 2]`. Returns the final
/// bracket, the number of steps and the prefix length in use.
fn bisect_kneading(
    config: &SearchConfig,
    goal: KneadingGoal<'_>,
) -> Result<(BigScalar, BigScalar, usize, usize)> {
    let p = search_precision(config.digits);
    let mut lo = BigScalar::from_f64(1.5, p);
    let mut hi = BigScalar::from_i64(2, p);
    let width = decimal_width(config.digits, p);
    let (mut target, infinite) = match &goal {
        KneadingGoal::Point(gen) => (gen(64), true),
        KneadingGoal::Prefix(k) => ((*k).clone(), false),
    };
    let side_lo = compare_param(&lo, &target, config.prec_max)?;
    let side_hi = compare_param(&hi, &target, config.prec_max)?;
    if side_lo == Ordering::Equal || side_lo == side_hi {
        return Err(Error::NotRealized {
            deepest: 0,
            reason: "family endpoints do not bracket the kneading target".into(),
        });
    }
    let mut steps = 0;
    while &hi - &lo >= width {
        if steps >= config.step_cap() {
            return Err(Error::NotRealized {
                deepest: 0,
                reason: format!("bisection step cap {} reached", config.step_cap()),
            });
        }
        steps += 1;
        let mid = midpoint(&lo, &hi);
        let mut side = compare_param(&mid, &target, config.prec_max)?;
        while side == Ordering::Equal && infinite {
            let KneadingGoal::Point(gen) = &goal else { unreachable!() };
            if target.len() >= 1 << 22 {
                return Err(Error::PrecisionExhausted { bits: config.prec_max });
            }
            target = gen(target.len() * 2);
            side = compare_param(&mid, &target, config.prec_max)?;
        }
        if side == side_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi, steps, target.len()))
}

fn midpoint(lo: &BigScalar, hi: &BigScalar) -> BigScalar {
    let p = lo.prec().max(hi.prec());
    let mut m = Float::with_val(p.bits() + 1, lo.as_float() + hi.as_float());
    m >>= 1;
    BigScalar::from_float(Float::with_val(p.bits(), &m))
}

fn decimal_width(digits: usize, p: Precision) -> BigScalar {
    let ten = Float::with_val(p.bits(), 10);
    BigScalar::from_float(Float::with_val(p.bits(), ten.pow(-(digits as i32))))
}

/// Fixed-point decimal with `digits` fractional digits, rounded in the given
/// direction.
pub(crate) fn fixed_decimal(x: &BigScalar, digits: usize, round: Round) -> String {
    let p = x.prec().bits().max((digits as f64 * 3.33) as u32 + 64);
    let ten = Float::with_val(p, 10).pow(digits as u32);
    let scaled = Float::with_val(p, x.as_float() * &ten);
    let int = match round {
        Round::Up => scaled.ceil(),
        Round::Down => scaled.floor(),
        _ => scaled.round(),
    };
    let z = int.to_integer().expect("finite");
    let neg = z < 0;
    let s = z.abs().to_string();
    let s = format!("{:0>width$}", s, width = digits + 1);
    let (ip, fp) = s.split_at(s.len() - digits);
    let sign = if neg { "-" } else { "" };
    if digits == 0 { format!("{sign}{ip}") } else { format!("{sign}{ip}.{fp}") }
}

fn verification_nest(text: &str, levels: usize, config: &SearchConfig) -> Result<(UnimodalMap, Nest)> {
    let p = search_precision(config.digits).doubled();
    let f = make_map(text, p)?;
    let nest_cfg = NestConfig {
        max_levels: levels,
        prec_start: p.max(config.nest.prec_start),
        prec_max: config.nest.prec_max.max(p.doubled()),
        ..config.nest.clone()
    };
    let nest = build_nest(&f, &nest_cfg)?;
    Ok((f, nest))
}

fn verify_fibonacci(text: &str, depth: usize, config: &SearchConfig) -> Result<Verification> {
    let (_, nest) = verification_nest(text, depth + 1, config)?;
    let mut log = vec![format!("rebuilt nest at {} bits: {} levels", nest.precision().bits(), nest.levels().len() - 1)];
    let mut ex = NestExplorer::new(&nest, config.return_cap);
    let mut matched = 0;
    let mut first: Option<CombinatoricsRecord> = None;
    let mut failure: Option<String> = None;
    for n in 1..=depth {
        let Ok(level) = nest.level(n) else {
            failure = Some(format!("level {n} missing (terminated {:?})", nest.terminated_by()));
            break;
        };
        if level.central {
            failure = Some(format!("level {n} is central"));
            break;
        }
        let branches = match ex.branches(n) {
            Ok(b) => b,
            Err(e) => {
                failure = Some(format!("level {n}: {e}"));
                break;
            }
        };
        if branches.len() != 2 {
            failure = Some(format!("level {n}: {} branches", branches.len()));
            break;
        }
        let landing = level.landing.clone().expect("levels >= 1 carry g_n(0)");
        if !branches[1].domain.contains(&landing) {
            failure = Some(format!("level {n}: g_n(0) misses the non-central branch"));
            break;
        }
        if n > 1 && n < depth {
            match ex.combinatorics(n) {
                Ok(rec) => {
                    let base = first.get_or_insert_with(|| rec.clone());
                    if !essentially_equivalent(base, &rec, 0) {
                        failure = Some(format!("level {n}: combinatorics differs from level 2"));
                        break;
                    }
                }
                Err(e) => {
                    failure = Some(format!("level {n}: {e}"));
                    break;
                }
            }
        }
        matched = n;
        log.push(format!("level {n}: r = {}, non-central, 2 branches", level.return_time));
    }
    let passed = failure.is_none();
    log.extend(failure);
    Ok(Verification {
        passed,
        precision_bits: nest.precision().bits(),
        levels_built: nest.levels().len() - 1,
        levels_matched: matched,
        transcript: log,
    })
}

fn verify_prefix(text: &str, k: &KneadingSequence, config: &SearchConfig) -> Result<Verification> {
    let p = search_precision(config.digits).doubled();
    let f = make_map(text, p)?;
    let got = kneading_until(&f, k.len(), None, config.prec_max)?;
    let passed = got.cmp_signed(k) == Ordering::Equal && got.len() >= k.len();
    let mut transcript = vec![format!("kneading at {} bits: {got}", p.bits())];
    if !passed {
        transcript.push(format!("prefix {k} not reproduced"));
    }
    Ok(Verification {
        passed,
        precision_bits: p.bits(),
        levels_built: 0,
        levels_matched: if passed { k.len() } else { 0 },
        transcript,
    })
}

/// Number of leading records reproduced by the map with parameter `text`.
fn records_matched(text: &str, records: &[CombinatoricsRecord], config: &SearchConfig, p: Precision) -> usize {
    let deepest = records.iter().map(|r| r.level).max().unwrap_or(0);
    let Ok(f) = make_map(text, p) else { return 0 };
    let cfg = NestConfig { max_levels: deepest + 1, prec_start: p, ..config.nest.clone() };
    let Ok(nest) = build_nest(&f, &cfg) else { return 0 };
    let mut ex = NestExplorer::new(&nest, config.return_cap);
    let mut matched = 0;
    for r in records {
        match ex.combinatorics(r.level) {
            Ok(got) if essentially_equivalent(r, &got, 0) => matched += 1,
            _ => break,
        }
    }
    matched
}

/// Explicit records: a deterministic grid scan that zooms onto the cell with
/// the most leading records matched, then a bisection between a non-matching
/// and a matching parameter down to `10^-digits`.
fn search_records(records: &[CombinatoricsRecord], config: &SearchConfig) -> Result<SearchOutcome> {
    let mut records = records.to_vec();
    records.sort_by_key(|r| r.level);
    let want = records.len();
    let p = search_precision(config.digits);
    let width = decimal_width(config.digits, p);
    let scan_digits = config.digits + 4;
    let mut lo = BigScalar::from_f64(1.5, p);
    let mut hi = BigScalar::from_i64(2, p);
    let mut best = 0usize;
    let mut found: Option<(BigScalar, BigScalar)> = None;
    let mut steps = 0usize;
    while found.is_none() {
        if &hi - &lo < width || steps >= config.step_cap() {
            return Err(Error::NotRealized {
                deepest: best,
                reason: "scan window collapsed without matching every record".into(),
            });
        }
        steps += 1;
        let g = config.grid;
        let span = &hi - &lo;
        let points: Vec<BigScalar> = (0..=g)
            .map(|i| {
                let frac = BigScalar::from_f64(i as f64 / g as f64, p);
                &lo + &(&span * &frac)
            })
            .collect();
        let scores: Vec<usize> = points
            .par_iter()
            .map(|a| {
                let text = fixed_decimal(a, scan_digits, Round::Nearest);
                if make_map(&text, p).is_err() {
                    return 0;
                }
                records_matched(&text, &records, config, p)
            })
            .collect();
        let top = *scores.iter().max().expect("grid is non-empty");
        if top == 0 && best == 0 && steps > 1 {
            return Err(Error::NotRealized {
                deepest: 0,
                reason: "no grid parameter matches the first record".into(),
            });
        }
        let i = scores.iter().position(|&s| s == top).expect("max exists");
        if top == want {
            let j = scores[..i].iter().rposition(|&s| s < want).unwrap_or(0);
            found = Some((points[j.min(i)].clone(), points[i].clone()));
            if scores[j] == want {
                found = Some((lo.clone(), points[i].clone()));
            }
        } else {
            best = best.max(top);
            lo = points[i.saturating_sub(1)].clone();
            hi = points[(i + 1).min(g)].clone();
        }
    }
    let (mut bad, mut good) = found.expect("loop exits on a match");
    while &good - &bad >= width && steps < config.step_cap() {
        steps += 1;
        let mid = midpoint(&bad, &good);
        let text = fixed_decimal(&mid, scan_digits, Round::Nearest);
        if records_matched(&text, &records, config, p) == want {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let text = fixed_decimal(&good, scan_digits, Round::Nearest);
    let deepest = records.last().map_or(0, |r| r.level);
    let (_, nest) = verification_nest(&text, deepest + 1, config)?;
    let mut ex = NestExplorer::new(&nest, config.return_cap);
    let mut transcript = vec![format!("rebuilt nest at {} bits", nest.precision().bits())];
    let mut matched = 0;
    for r in &records {
        match ex.combinatorics(r.level) {
            Ok(got) if essentially_equivalent(r, &got, 0) => {
                matched += 1;
                transcript.push(format!("level {}: combinatorics reproduced", r.level));
            }
            Ok(_) => {
                transcript.push(format!("level {}: combinatorics differs", r.level));
                break;
            }
            Err(e) => {
                transcript.push(format!("level {}: {e}", r.level));
                break;
            }
        }
    }
    let verification = Verification {
        passed: matched == want,
        precision_bits: nest.precision().bits(),
        levels_built: nest.levels().len() - 1,
        levels_matched: matched,
        transcript,
    };
    let (b, g) = (bad.clone(), good.clone());
    let (lo, hi) = if b < g { (b, g) } else { (g, b) };
    finish(text, &lo, &hi, steps, 0, verification, config)
}
