mod exit;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnest::run::{cmd_analyze, cmd_nest, cmd_search, cmd_sweep, Format, RunConfig, RunRecord};
use pnest::Error;

use exit::Code;

/// Principal nests, generalized renormalizations and scaling-factor geometry
/// of the quadratic family f(x) = 1 - a + a x^2.
#[derive(Parser, Debug)]
#[command(name = "pnest", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the nest of one parameter with branches, combinatorics and geometry.
    Nest {
        /// Parameter a in (3/2, 2], as a decimal.
        #[arg(long)]
        param: String,
        #[command(flatten)]
        common: Common,
    },
    /// Search for a parameter realizing a target combinatorics.
    Search {
        /// Named target (fibonacci) or a JSON target file.
        #[arg(long)]
        target: String,
        /// Decimal digits of the returned parameter.
        #[arg(long, default_value_t = 60)]
        digits: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Build nests over a parameter grid.
    Sweep {
        /// Closed range "lo,hi" inside (3/2, 2].
        #[arg(long)]
        range: String,
        /// Number of grid points (endpoints included).
        #[arg(long, default_value_t = 2)]
        grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run a stored run record and report whether it reproduces.
    Analyze {
        /// Run record in JSON.
        input: PathBuf,
        /// Write the outcome here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Starting precision in bits.
    #[arg(long)]
    prec: Option<u32>,
    /// Precision ceiling in bits.
    #[arg(long = "prec-max")]
    prec_max: Option<u32>,
    /// Deepest nest level to build.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long = "orbit-cap")]
    orbit_cap: Option<usize>,
    #[arg(long = "return-cap")]
    return_cap: Option<usize>,
    /// Small-factor threshold.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: String,
    /// Record wall-clock timings in the output.
    #[arg(long)]
    timings: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let d = RunConfig::default();
        Ok(RunConfig {
            precision_start: self.prec.unwrap_or(d.precision_start),
            precision_max: self.prec_max.unwrap_or(d.precision_max),
            max_levels: self.levels.unwrap_or(d.max_levels),
            orbit_cap: self.orbit_cap.unwrap_or(d.orbit_cap),
            return_cap: self.return_cap.unwrap_or(d.return_cap),
            delta: self.delta.unwrap_or(d.delta),
            output: self.out.clone(),
            format: self.format.parse::<Format>()?,
            timings: self.timings,
            ..d
        })
    }
}

fn parse_range(s: &str) -> Result<(String, String), Error> {
    let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] if !lo.is_empty() && !hi.is_empty() => Ok((lo.to_string(), hi.to_string())),
        _ => Err(Error::Config(format!("range must look like \"lo,hi\", got {s:?}"))),
    }
}

fn print(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(rec: &RunRecord) -> Result<(), Error> {
    match rec.emit()? {
        Some(text) => print(&text),
        None => Ok(()),
    }
}

fn with_path(e: std::io::Error, path: &std::path::Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<Code, Error> {
    match cli.command {
        Command::Nest { param, common } => {
            let config = RunConfig { parameter: Some(param), ..common.config()? };
            let rec = cmd_nest(&config)?;
            emit(&rec)?;
            let termination = rec.results.nest.as_ref().and_then(|n| n.terminated_by);
            Ok(Code::from_termination(termination))
        }
        Command::Search { target, digits, common } => {
            let config = RunConfig { target: Some(target), digits, ..common.config()? };
            let rec = cmd_search(&config)?;
            emit(&rec)?;
            Ok(Code::Ok)
        }
        Command::Sweep { range, grid, common } => {
            let config = RunConfig { range: Some(parse_range(&range)?), grid, ..common.config()? };
            let rec = cmd_sweep(&config)?;
            emit(&rec)?;
            Ok(Code::Ok)
        }
        Command::Analyze { input, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| with_path(e, &input))?;
            let rec = RunRecord::from_json(&text)?;
            let outcome = cmd_analyze(&rec)?;
            let body = serde_json::to_string_pretty(&outcome).map_err(Error::from)?;
            match out {
                Some(path) => std::fs::write(path, body)?,
                None => print(&body)?,
            }
            Ok(if outcome.reproduced { Code::Ok } else { Code::NotReproduced })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("pnest: error: {e}");
            Code::from_error(&e).into()
        }
    }
}
