//! Run configuration, the pipelines behind the command-line subcommands, and
//! the persisted run records with their JSON and CSV encodings.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    analyze_geometry, decay_fit, noncentral_lambdas, small_factor_trigger, GeometryReport,
    DEFAULT_DELTA,
};
use crate::map::make_map;
use crate::nest::{build_nest, scaling_factors, Nest, NestConfig, Termination};
use crate::orbit::DEFAULT_ORBIT_CAP;
use crate::renorm::{CombinatoricsRecord, NestExplorer, DEFAULT_RETURN_CAP};
use crate::scalar::{BigScalar, Precision};
use crate::search::{search_parameter, SearchConfig, SearchOutcome, SearchTarget};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "PNEST_WORKERS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parameter: Option<String>,
    /// Named target or path to a target file.
    pub target: Option<String>,
    pub precision_start: u32,
    pub precision_max: u32,
    pub max_levels: usize,
    pub orbit_cap: usize,
    pub return_cap: usize,
    pub delta: f64,
    pub digits: usize,
    /// Sweep grid size and closed parameter range.
    pub grid: usize,
    pub range: Option<(String, String)>,
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Record wall-clock timings (makes records differ between runs).
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nest = NestConfig::default();
        RunConfig {
            parameter: None,
            target: None,
            precision_start: nest.prec_start.bits(),
            precision_max: nest.prec_max.bits(),
            max_levels: nest.max_levels,
            orbit_cap: DEFAULT_ORBIT_CAP,
            return_cap: DEFAULT_RETURN_CAP,
            delta: DEFAULT_DELTA,
            digits: 60,
            grid: 2,
            range: None,
            output: None,
            format: Format::Json,
            timings: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.nest_config()?.validate()?;
        if self.return_cap < 1 {
            return Err(Error::Config("return_cap must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    pub fn nest_config(&self) -> Result<NestConfig> {
        let start = Precision::new(self.precision_start)?;
        let max = Precision::new(self.precision_max)?;
        Ok(NestConfig {
            max_levels: self.max_levels,
            orbit_cap: self.orbit_cap,
            prec_start: start,
            prec_max: max,
            ..NestConfig::default()
        })
    }

    fn search_config(&self) -> Result<SearchConfig> {
        Ok(SearchConfig {
            digits: self.digits,
            nest: self.nest_config()?,
            return_cap: self.return_cap,
            ..SearchConfig::default()
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub nest_ms: Option<f64>,
    pub renorm_ms: Option<f64>,
    pub geometry_ms: Option<f64>,
    pub search_ms: Option<f64>,
    pub sweep_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n: usize,
    pub lo: BigScalar,
    pub hi: BigScalar,
    pub return_time: usize,
    pub central: bool,
    pub degenerate: bool,
    /// `λ_n` correctly rounded to a double, and at working precision.
    pub lambda: Option<f64>,
    pub lambda_exact: Option<BigScalar>,
    pub terminated_by: Option<Termination>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestSummary {
    pub parameter: String,
    pub precision_bits: u32,
    pub alpha: BigScalar,
    pub depth: usize,
    pub terminated_by: Option<Termination>,
    pub levels: Vec<LevelSummary>,
}

impl NestSummary {
    pub fn of(nest: &Nest) -> Self {
        let lam = scaling_factors(nest);
        let levels = nest
            .levels()
            .iter()
            .map(|l| {
                let exact = (l.n >= 1 && !l.degenerate).then(|| lam.get(l.n - 1).cloned()).flatten();
                LevelSummary {
                    n: l.n,
                    lo: l.interval.lo().clone(),
                    hi: l.interval.hi().clone(),
                    return_time: l.return_time,
                    central: l.central,
                    degenerate: l.degenerate,
                    lambda: exact.as_ref().map(BigScalar::to_f64),
                    lambda_exact: exact,
                    terminated_by: l.terminated_by,
                }
            })
            .collect();
        NestSummary {
            parameter: nest.map().param_text(),
            precision_bits: nest.precision().bits(),
            alpha: nest.alpha().clone(),
            depth: nest.depth(),
            terminated_by: nest.terminated_by(),
            levels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: usize,
    pub error: String,
}

/// One sweep row: `(a, depth, termination, first-trigger N, rho)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: String,
    pub depth: Option<usize>,
    pub termination: Option<Termination>,
    pub trigger_n: Option<usize>,
    pub rho: Option<f64>,
    pub error: Option<String>,
}

/// One CSV row of a nest run: `(n, λ_n, central, C_geo)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub n: usize,
    pub lambda: Option<f64>,
    pub central: bool,
    pub c_geo: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub nest: Option<NestSummary>,
    pub combinatorics: Vec<CombinatoricsRecord>,
    pub combinatorics_errors: Vec<LevelError>,
    pub geometry: Option<GeometryReport>,
    pub search: Option<SearchOutcome>,
    pub sweep: Option<Vec<SweepRow>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub timings: Option<Timings>,
    pub results: RunResults,
}

impl RunRecord {
    fn new(command: &str, config: &RunConfig) -> Self {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config: config.clone(),
            timings: config.timings.then(Timings::default),
            results: RunResults::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: RunRecord = serde_json::from_str(text)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        Ok(rec)
    }

    /// Geometry rows of a nest run.
    pub fn geometry_rows(&self) -> Vec<GeometryRow> {
        let Some(nest) = &self.results.nest else { return Vec::new() };
        nest.levels
            .iter()
            .skip(1)
            .map(|l| GeometryRow {
                n: l.n,
                lambda: l.lambda,
                central: l.central,
                c_geo: self
                    .results
                    .geometry
                    .as_ref()
                    .and_then(|g| g.levels.iter().find(|x| x.n == l.n))
                    .and_then(|x| x.c_geo),
            })
            .collect()
    }

    /// CSV body: sweep rows, a search summary, or geometry rows.
    pub fn to_csv(&self) -> Result<String> {
        if let Some(rows) = &self.results.sweep {
            return write_csv(rows);
        }
        if let Some(s) = &self.results.search {
            #[derive(Serialize)]
            struct Row<'a> {
                parameter: &'a str,
                steps: usize,
                verified: bool,
                levels_matched: usize,
            }
            return write_csv(&[Row {
                parameter: &s.parameter,
                steps: s.steps,
                verified: s.verification.passed,
                levels_matched: s.verification.levels_matched,
            }]);
        }
        write_csv(&self.geometry_rows())
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Writes the record to `config.output`, or returns the text when no
    /// output path is configured.
    pub fn emit(&self) -> Result<Option<String>> {
        let text = self.render(self.config.format)?;
        match &self.config.output {
            Some(path) => {
                let annotate =
                    |e: std::io::Error| std::io::Error::new(e.kind(), format!("{}: {e}", path.display()));
                let mut f = std::fs::File::create(path).map_err(annotate)?;
                f.write_all(text.as_bytes()).map_err(annotate)?;
                Ok(None)
            }
            None => Ok(Some(text)),
        }
    }
}

pub fn write_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn required_parameter(config: &RunConfig) -> Result<&str> {
    config.parameter.as_deref().ok_or_else(|| Error::Config("a parameter is required".into()))
}

/// Nest, branches, combinatorics and geometry for one parameter.
pub fn cmd_nest(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let a = required_parameter(config)?;
    let nest_cfg = config.nest_config()?;
    let mut rec = RunRecord::new("nest", config);
    let t = Instant::now();
    let f = make_map(a, nest_cfg.prec_start)?;
    let nest = build_nest(&f, &nest_cfg)?;
    let t_nest = ms(t);
    let t = Instant::now();
    let mut ex = NestExplorer::new(&nest, config.return_cap);
    for l in nest.levels().iter().skip(1) {
        if l.degenerate || nest.level(l.n + 1).is_err() {
            continue;
        }
        match ex.combinatorics(l.n) {
            Ok(c) => rec.results.combinatorics.push(c),
            Err(e) => rec.results.combinatorics_errors.push(LevelError { level: l.n, error: e.to_string() }),
        }
    }
    let t_renorm = ms(t);
    let t = Instant::now();
    let geometry = analyze_geometry(&mut ex, config.delta)?;
    let t_geo = ms(t);
    rec.results.nest = Some(NestSummary::of(&nest));
    rec.results.geometry = Some(geometry);
    if let Some(tm) = rec.timings.as_mut() {
        tm.nest_ms = Some(t_nest);
        tm.renorm_ms = Some(t_renorm);
        tm.geometry_ms = Some(t_geo);
    }
    Ok(rec)
}

/// Reads a target: a named target, or the path of a JSON target file.
pub fn load_target(source: &str) -> Result<SearchTarget> {
    let path = Path::new(source);
    if path.exists() {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        SearchTarget::from_text(&text)
    } else if source.trim_start().starts_with(['{', '[']) {
        SearchTarget::from_text(source)
    } else if source.ends_with(".json") {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("target file {source} not found"),
        )))
    } else {
        SearchTarget::from_text(source)
    }
}

pub fn cmd_search(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let source = config.target.as_deref().ok_or_else(|| Error::Config("a target is required".into()))?;
    let target = load_target(source)?;
    let mut rec = RunRecord::new("search", config);
    let t = Instant::now();
    let outcome = search_parameter(&target, &config.search_config()?)?;
    if let Some(tm) = rec.timings.as_mut() {
        tm.search_ms = Some(ms(t));
    }
    rec.results.search = Some(outcome);
    Ok(rec)
}

/// The `grid` parameters `lo + i (hi - lo)/(grid - 1)` as decimal strings.
pub fn sweep_grid(range: &(String, String), grid: usize) -> Result<Vec<String>> {
    if grid < 2 {
        return Err(Error::Config("grid must be at least 2".into()));
    }
    let bits = Precision::new(256)?;
    let lo = BigScalar::parse_decimal(&range.0, bits)?;
    let hi = BigScalar::parse_decimal(&range.1, bits)?;
    if lo >= hi {
        return Err(Error::Config(format!("empty range [{}, {}]", range.0, range.1)));
    }
    make_map(&range.0, bits)?;
    make_map(&range.1, bits)?;
    let span = &hi - &lo;
    let den = BigScalar::from_i64(grid as i64 - 1, bits);
    Ok((0..grid)
        .map(|i| {
            let a = &lo + &(&(&span * &BigScalar::from_i64(i as i64, bits)) / &den);
            trim_decimal(&crate::search::fixed_decimal(&a, 30, rug::float::Round::Nearest))
        })
        .collect())
}

fn trim_decimal(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn sweep_row(a: &str, config: &RunConfig, nest_cfg: &NestConfig) -> SweepRow {
    let mut row = SweepRow { a: a.to_string(), depth: None, termination: None, trigger_n: None, rho: None, error: None };
    let nest = match make_map(a, nest_cfg.prec_start).and_then(|f| build_nest(&f, nest_cfg)) {
        Ok(n) => n,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.depth = Some(nest.depth());
    row.termination = nest.terminated_by();
    let lam: Vec<f64> = scaling_factors(&nest).iter().map(BigScalar::to_f64).collect();
    row.trigger_n = small_factor_trigger(&lam, config.delta).ok().and_then(|t| t.level());
    let series: Vec<f64> = noncentral_lambdas(&nest).iter().map(|x| x.lambda).collect();
    row.rho = decay_fit(&series).ok().map(|f| f.rho);
    row
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Nest builds over a deterministic parameter grid. Rows are independent;
/// a failing row records its error and the sweep continues.
pub fn cmd_sweep(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let range = config.range.as_ref().ok_or_else(|| Error::Config("a range is required".into()))?;
    let params = sweep_grid(range, config.grid)?;
    let nest_cfg = config.nest_config()?;
    let mut rec = RunRecord::new("sweep", config);
    let t = Instant::now();
    let run = || -> Vec<SweepRow> {
        params.par_iter().map(|a| sweep_row(a, config, &nest_cfg)).collect()
    };
    let rows = match workers_from_env()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    if let Some(tm) = rec.timings.as_mut() {
        tm.sweep_ms = Some(ms(t));
    }
    rec.results.sweep = Some(rows);
    Ok(rec)
}

/// Outcome of re-running a stored record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutcome {
    pub command: String,
    pub reproduced: bool,
    pub rerun: RunRecord,
}

/// Re-runs the configuration stored in `record` and compares results.
pub fn cmd_analyze(record: &RunRecord) -> Result<AnalyzeOutcome> {
    let config = RunConfig { output: None, ..record.config.clone() };
    let mut rerun = match record.command.as_str() {
        "nest" => cmd_nest(&config)?,
        "search" => cmd_search(&config)?,
        "sweep" => cmd_sweep(&config)?,
        other => return Err(Error::Config(format!("unknown command {other:?} in record"))),
    };
    rerun.config.output = record.config.output.clone();
    Ok(AnalyzeOutcome {
        command: record.command.clone(),
        reproduced: rerun.results == record.results,
        rerun,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_deterministic_and_trimmed() {
        let g = sweep_grid(&("1.99".into(), "2.0".into()), 2).unwrap();
        assert_eq!(g, vec!["1.99".to_string(), "2".to_string()]);
        let g = sweep_grid(&("1.7".into(), "2".into()), 4).unwrap();
        assert_eq!(g, vec!["1.7", "1.8", "1.9", "2"]);
        assert!(sweep_grid(&("1.9".into(), "1.9".into()), 2).is_err());
        assert!(sweep_grid(&("1.2".into(), "1.9".into()), 2).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig { precision_start: 8192, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { delta: 0.0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }
}
