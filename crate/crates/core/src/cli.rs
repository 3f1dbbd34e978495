//! `lancaster-lab` command-line front end.
//!
//! ```text
//! lancaster-lab validate --model model.json
//! lancaster-lab report   --fixture lancaster:0.05,0.15 --out report.json
//! lancaster-lab maxcorr  --fixture disc --grid 400 --out spectrum.csv
//! lancaster-lab sample   --model model.json --count 100000 --seed 42 --out xy.csv
//! lancaster-lab bench    --out bench.csv
//! ```
//!
//! Errors go to stderr as a single `error kind=<kind> exit=<code> ...` line;
//! exit codes are 1 for config errors, 2 for a violated coefficient bound and
//! 3 for numerical failures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::correlation::{self, DiscretizedJoint};
use crate::error::{Error, Result};
use crate::fixtures::{self, Fixture};
use crate::lancaster::{self, LancasterModel, ModelConfig};
use crate::regression::{self, CounterexampleReport, ReportOptions};

pub const THREADS_ENV: &str = "LANCASTER_LAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the coefficient bound of a model.
    Validate(CommonArgs),
    /// Full counterexample report for a Lancaster model.
    Report(CommonArgs),
    /// Singular spectrum and optimizing functions.
    Maxcorr(CommonArgs),
    /// Draw (x, y) pairs from a Lancaster model.
    Sample(CommonArgs),
    /// Run every built-in fixture.
    Bench(CommonArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, Args)]
pub struct CommonArgs {
    /// JSON model file.
    #[arg(long, conflicts_with = "fixture")]
    pub model: Option<PathBuf>,
    /// Built-in fixture: disc, pball:P, fourpoint, fgm:RHO1, lancaster:R1,R2,...
    #[arg(long)]
    pub fixture: Option<String>,
    /// Nodes per axis of the correlation grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Number of draws for `sample`.
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    /// ACE convergence tolerance.
    #[arg(long)]
    pub tol: Option<String>,
}

#[derive(Debug, Parser)]
#[command(
    name = "lancaster-lab",
    version,
    about = "Lancaster distributions, linear regression and maximal correlation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where the joint law comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Model(PathBuf),
    Fixture(Fixture),
    /// `bench` runs every fixture.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Validate,
    Report,
    Maxcorr,
    Sample,
    Bench,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub source: Source,
    pub grid: Option<usize>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub count: usize,
    pub tol: f64,
}

impl RunConfig {
    /// Resolves parsed arguments, failing before any computation when a
    /// fixture name or value is invalid.
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let (command, args) = match cli.command {
            Command::Validate(a) => (CommandKind::Validate, a),
            Command::Report(a) => (CommandKind::Report, a),
            Command::Maxcorr(a) => (CommandKind::Maxcorr, a),
            Command::Sample(a) => (CommandKind::Sample, a),
            Command::Bench(a) => (CommandKind::Bench, a),
        };
        let source = match (&args.model, &args.fixture, command) {
            (Some(p), None, _) => Source::Model(p.clone()),
            (None, Some(name), _) => Source::Fixture(Fixture::parse(name)?),
            (None, None, CommandKind::Bench) => Source::All,
            (None, None, _) => {
                return Err(Error::Config(
                    "one of --model or --fixture is required".into(),
                ))
            }
            (Some(_), Some(_), _) => {
                return Err(Error::Config("--model and --fixture are exclusive".into()))
            }
        };
        if let Some(g) = args.grid {
            if g < 16 {
                return Err(Error::Config(format!("--grid {g} must be >= 16")));
            }
        }
        let tol = match &args.tol {
            Some(t) => t
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::Config(format!("--tol {t:?} must be a positive real")))?,
            None => correlation::DEFAULT_ACE_TOL,
        };
        if command == CommandKind::Sample && args.count == 0 {
            return Err(Error::Config("--count must be >= 1".into()));
        }
        let default_format = match command {
            CommandKind::Report | CommandKind::Validate => Format::Json,
            _ => Format::Csv,
        };
        Ok(Self {
            command,
            source,
            grid: args.grid,
            seed: args.seed,
            output_path: args.out,
            format: args.format.unwrap_or(default_format),
            count: args.count,
            tol,
        })
    }
}

/// Artifacts produced by a run, keyed by destination.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Main output (written to `--out` or stdout).
    pub primary: String,
    /// Extra files next to `--out`: `(suffix, contents)`.
    pub sidecars: Vec<(String, String)>,
    /// Human-readable summary lines for stdout when `--out` is a file.
    pub summary: Vec<String>,
}

/// Formats a double with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn load_model(source: &Source) -> Result<LancasterModel> {
    match source {
        Source::Model(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ModelConfig::from_json(&text)?.build()
        }
        Source::Fixture(f) => f.model()?.ok_or_else(|| {
            Error::Config(format!("fixture {} has no coefficient sequence", f.name()))
        }),
        Source::All => Err(Error::Config("a single model is required".into())),
    }
}

fn load_joint(source: &Source, grid: Option<usize>) -> Result<(DiscretizedJoint, Option<f64>)> {
    match source {
        Source::Fixture(f) => {
            let joint = f.discretize(grid.unwrap_or_else(|| f.default_grid()))?;
            let analytic = f.model()?.map(|m| correlation::maxcorr_analytic(&m));
            Ok((joint, analytic))
        }
        _ => {
            let model = load_model(source)?;
            let joint =
                DiscretizedJoint::from_model(&model, grid.unwrap_or(correlation::LANCASTER_GRID))?;
            Ok((joint, Some(correlation::maxcorr_analytic(&model))))
        }
    }
}

/// Executes a run and returns its artifacts without touching the filesystem
/// (except for reading `--model`).
pub fn execute(config: &RunConfig) -> RunResult {
    match config.command {
        CommandKind::Validate => run_validate(config),
        CommandKind::Report => run_report(config),
        CommandKind::Maxcorr => run_maxcorr(config),
        CommandKind::Sample => run_sample(config),
        CommandKind::Bench => run_bench(config),
    }
}

fn run_validate(config: &RunConfig) -> RunResult {
    let (bound_value, outcome) = match load_model(&config.source) {
        Ok(m) => (m.coeffs().bound_value(), Ok(())),
        Err(Error::BoundViolated { bound_value }) => {
            (bound_value, Err(Error::BoundViolated { bound_value }))
        }
        Err(e) => return Err(e.into()),
    };
    let passed = outcome.is_ok();
    let primary = match config.format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({ "bound_value": bound_value, "pass": passed }))
                .unwrap()
        ),
        Format::Csv => format!("bound_value,pass\n{},{}\n", fmt_real(bound_value), passed),
    };
    let status = if passed { "pass" } else { "fail" };
    let out = RunOutput {
        primary,
        sidecars: Vec::new(),
        summary: vec![format!("bound_value={bound_value} status={status}")],
    };
    match outcome {
        Ok(()) => Ok(out),
        Err(error) => Err(RunFailure {
            error,
            partial: Some(out),
        }),
    }
}

/// A failed run, possibly with output that should still be written
/// (`validate` prints the bound it found, `report` the checks that failed).
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Option<RunOutput>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

pub type RunResult = std::result::Result<RunOutput, RunFailure>;

#[derive(Serialize)]
struct ReportJson<'a> {
    pearson: f64,
    maxcorr_analytic: Option<f64>,
    maxcorr_svd: f64,
    maxcorr_ace: f64,
    gap: f64,
    regressions: &'a [regression::DegreeRegression],
    bound_value: f64,
    model: &'a ModelConfig,
}

fn report_json(r: &CounterexampleReport) -> String {
    let body = ReportJson {
        pearson: r.correlation.pearson,
        maxcorr_analytic: r.correlation.maxcorr_analytic,
        maxcorr_svd: r.correlation.maxcorr_svd,
        maxcorr_ace: r.correlation.maxcorr_ace,
        gap: r.correlation.gap,
        regressions: &r.regressions,
        bound_value: r.bound_value,
        model: &r.model,
    };
    format!("{}\n", serde_json::to_string_pretty(&body).unwrap())
}

fn report_csv(r: &CounterexampleReport) -> String {
    let c = &r.correlation;
    let mut s = String::from("key,value\n");
    let mut row = |k: &str, v: f64| {
        let _ = writeln!(s, "{k},{}", fmt_real(v));
    };
    row("pearson", c.pearson);
    row("maxcorr_analytic", c.maxcorr_analytic.unwrap_or(f64::NAN));
    row("maxcorr_svd", c.maxcorr_svd);
    row("maxcorr_ace", c.maxcorr_ace);
    row("gap", c.gap);
    row("bound_value", r.bound_value);
    row("a1", r.linear.a1);
    row("a0", r.linear.a0);
    row("b1", r.linear.b1);
    row("b0", r.linear.b0);
    row("linear_residual", r.linear.residual);
    for d in &r.regressions {
        row(
            &format!("eigen_residual_{}", d.degree),
            d.eigen.max_residual(),
        );
        row(
            &format!("leading_error_{}", d.degree),
            d.polynomial.max_leading_error(),
        );
    }
    s
}

fn run_report(config: &RunConfig) -> RunResult {
    let model = load_model(&config.source)?;
    let opts = ReportOptions {
        grid: config.grid.unwrap_or(correlation::LANCASTER_GRID),
        ace_tol: config.tol,
        ..ReportOptions::default()
    };
    let report = regression::counterexample_report(&model, opts)?;
    let primary = match config.format {
        Format::Json => report_json(&report),
        Format::Csv => report_csv(&report),
    };
    let mut summary: Vec<String> = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "check {} {} {}",
                c.name,
                if c.passed { "pass" } else { "fail" },
                c.detail
            )
        })
        .collect();
    summary.push(format!(
        "counterexample={} degenerate_pearson={} gap={}",
        report.counterexample, report.degenerate_pearson, report.correlation.gap
    ));
    let out = RunOutput {
        primary,
        sidecars: Vec::new(),
        summary,
    };
    if !report.all_checks_pass() {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        return Err(RunFailure {
            error: Error::CheckFailed(failed.join(",")),
            partial: Some(out),
        });
    }
    Ok(out)
}

fn index_value_csv(values: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", fmt_real(*v));
    }
    s
}

fn run_maxcorr(config: &RunConfig) -> RunResult {
    let (joint, analytic) = load_joint(&config.source, config.grid)?;
    let svd = correlation::maxcorr_svd(&joint)?;
    let ace = correlation::maxcorr_ace(&joint, correlation::DEFAULT_ACE_MAX_ITERS, config.tol)?;
    let summary = vec![format!(
        "maxcorr_svd={} maxcorr_ace={} ace_iterations={}",
        svd.r, ace.r, ace.iterations
    )];
    match config.format {
        Format::Csv => Ok(RunOutput {
            primary: index_value_csv(&svd.spectrum),
            sidecars: vec![
                ("g1.csv".into(), index_value_csv(&svd.g1_values)),
                ("g2.csv".into(), index_value_csv(&svd.g2_values)),
            ],
            summary,
        }),
        Format::Json => {
            let body = json!({
                "maxcorr_analytic": analytic,
                "maxcorr_svd": svd.r,
                "maxcorr_ace": ace.r,
                "ace_iterations": ace.iterations,
                "spectrum": svd.spectrum,
                "x_nodes": joint.x_nodes(),
                "y_nodes": joint.y_nodes(),
                "g1_values": svd.g1_values,
                "g2_values": svd.g2_values,
            });
            Ok(RunOutput {
                primary: format!("{}\n", serde_json::to_string_pretty(&body).unwrap()),
                sidecars: Vec::new(),
                summary,
            })
        }
    }
}

fn run_sample(config: &RunConfig) -> RunResult {
    let model = load_model(&config.source)?;
    let draws = lancaster::sample_joint(&model, config.count, config.seed);
    let summary = vec![format!(
        "count={} acceptance_rate={}",
        draws.points.len(),
        draws.acceptance_rate()
    )];
    let primary = match config.format {
        Format::Csv => {
            let mut s = String::from("x,y\n");
            for (x, y) in &draws.points {
                let _ = writeln!(s, "{},{}", fmt_real(*x), fmt_real(*y));
            }
            s
        }
        Format::Json => format!("{}\n", serde_json::to_string(&draws.points).unwrap()),
    };
    Ok(RunOutput {
        primary,
        sidecars: Vec::new(),
        summary,
    })
}

/// One row of the `bench` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub fixture: String,
    pub pearson: f64,
    #[serde(rename = "R_analytic")]
    pub r_analytic: Option<f64>,
    #[serde(rename = "R_svd")]
    pub r_svd: f64,
    #[serde(rename = "R_ace")]
    pub r_ace: f64,
    pub gap: f64,
}

/// Runs `fixtures`, each on its default grid unless `grid` is given.
pub fn bench_rows(fixtures: &[Fixture], grid: Option<usize>, tol: f64) -> Result<Vec<BenchRow>> {
    fixtures
        .iter()
        .map(|f| {
            let joint = f.discretize(grid.unwrap_or_else(|| f.default_grid()))?;
            let analytic = f.model()?.map(|m| correlation::maxcorr_analytic(&m));
            let r = correlation::correlation_report(
                &joint,
                analytic,
                correlation::DEFAULT_ACE_MAX_ITERS,
                tol,
            )?;
            Ok(BenchRow {
                fixture: f.name(),
                pearson: r.pearson,
                r_analytic: analytic,
                r_svd: r.maxcorr_svd,
                r_ace: r.maxcorr_ace,
                gap: r.gap,
            })
        })
        .collect()
}

fn run_bench(config: &RunConfig) -> RunResult {
    let list = match &config.source {
        Source::All => fixtures::bench_fixtures(),
        Source::Fixture(f) => vec![f.clone()],
        Source::Model(_) => {
            return Err(Error::Config("bench runs built-in fixtures only".into()).into())
        }
    };
    let rows = bench_rows(&list, config.grid, config.tol)?;
    let primary = match config.format {
        Format::Csv => {
            let mut s = String::from("fixture,pearson,R_analytic,R_svd,R_ace,gap\n");
            for r in &rows {
                let analytic = r.r_analytic.map(fmt_real).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.fixture,
                    fmt_real(r.pearson),
                    analytic,
                    fmt_real(r.r_svd),
                    fmt_real(r.r_ace),
                    fmt_real(r.gap)
                );
            }
            s
        }
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&rows).unwrap()),
    };
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "{} pearson={:.6} R_svd={:.6} R_ace={:.6}",
                r.fixture, r.pearson, r.r_svd, r.r_ace
            )
        })
        .collect();
    Ok(RunOutput {
        primary,
        sidecars: Vec::new(),
        summary,
    })
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

/// Path of a sidecar next to `out`: `spectrum.csv` + `g1.csv` gives
/// `spectrum.g1.csv`.
pub fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn emit(config: &RunConfig, out: &RunOutput) -> Result<()> {
    match &config.output_path {
        Some(path) => {
            write_atomic(path, &out.primary)?;
            for (suffix, body) in &out.sidecars {
                write_atomic(&sidecar_path(path, suffix), body)?;
            }
            for line in &out.summary {
                println!("{line}");
            }
        }
        None => {
            print!("{}", out.primary);
            if config.command == CommandKind::Validate {
                for line in &out.summary {
                    println!("{line}");
                }
            }
        }
    }
    Ok(())
}

/// Runs the command and writes its artifacts. Returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    let (out, err) = match execute(config) {
        Ok(out) => (Some(out), None),
        Err(f) => (f.partial, Some(f.error)),
    };
    if let Some(out) = &out {
        if let Err(e) = emit(config, out) {
            report_error(&e);
            return e.exit_code();
        }
    }
    match err {
        Some(e) => {
            report_error(&e);
            e.exit_code()
        }
        None => 0,
    }
}

/// One machine-parsable line on stderr.
pub fn error_line(e: &Error) -> String {
    format!(
        "error kind={} exit={} message={:?}",
        e.kind(),
        e.exit_code(),
        e.to_string()
    )
}

fn report_error(e: &Error) {
    eprintln!("{}", error_line(e));
}

/// Reads `LANCASTER_LAB_THREADS` and caps the global thread pool.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
        Error::Config(format!("{THREADS_ENV}={raw:?} must be a positive integer"))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Entry point shared by the binary: parse, resolve, run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let err = Error::Config(first.trim_start_matches("error: ").to_string());
            report_error(&err);
            return 1;
        }
    };
    if let Err(e) = configure_threads() {
        report_error(&e);
        return e.exit_code();
    }
    match RunConfig::from_cli(cli) {
        Ok(config) => run(&config),
        Err(e) => {
            report_error(&e);
            e.exit_code()
        }
    }
}
