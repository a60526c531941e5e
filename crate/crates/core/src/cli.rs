//! `pboot` command line.

use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::bench::{self, BenchPlan, DataSource, ModeKind};
use crate::dataset::{render_table, synth_expression, Dataset, SynthShape};
use crate::engine::{default_workers, process, Engine, EngineLimits, ExecutionMode, RunRequest, DEFAULT_MAX_PLAN_BYTES};
use crate::error::Error;
use crate::estimates::EstimateReport;
use crate::plan::Stype;
use crate::statistic::StatisticSpec;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_EQUIVALENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pboot", version, about = "Parallel bootstrap resampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one bootstrap and print the estimate report.
    Run(RunArgs),
    /// Time a bootstrap across modes and worker counts.
    Bench(BenchArgs),
    /// Check that every parallel mode reproduces the serial results.
    Verify(VerifyArgs),
    /// Write a synthetic expression table.
    Synth(SynthArgs),
    /// Serve as a multiprocess worker over stdin/stdout.
    #[command(hide = true)]
    Worker,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// CSV table with a header row.
    #[arg(long, value_name = "PATH", group = "source")]
    data: Option<PathBuf>,
    /// Synthetic expression matrix, e.g. 7129x47+25.
    #[arg(long, value_name = "GxA+B", group = "source")]
    synth: Option<SynthShape>,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// mean, median, sd (optionally :COLUMN), ratio:X:U or per-column:STAT:C1,C2.
    #[arg(long, value_name = "NAME")]
    statistic: StatisticSpec,
    #[arg(long, value_name = "R")]
    resamples: usize,
    /// i (indices), f (frequencies) or w (weights); defaults per statistic.
    #[arg(long, value_name = "i|f|w")]
    stype: Option<Stype>,
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "N", default_value_t = DEFAULT_MAX_PLAN_BYTES)]
    max_plan_bytes: u64,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_name = "serial|threaded|multiprocess", default_value = "serial")]
    mode: String,
    /// Worker count for parallel modes; defaults to PBOOT_WORKERS or the core count.
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
    #[arg(long, value_name = "F", default_value_t = 0.05)]
    alpha: f64,
    /// Also write the report as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated, strictly increasing; 1 is the serial baseline.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "1,2,4")]
    workers: Vec<usize>,
    /// One or more of serial, threaded, multiprocess (comma-separated).
    #[arg(long, value_name = "MODES", value_delimiter = ',', default_value = "threaded")]
    mode: Vec<ModeKind>,
    #[arg(long, value_name = "N", default_value_t = 3)]
    reps: usize,
    /// Record CSV; printed to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Print every case, not only failures.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "GxA+B", default_value_t = SynthShape::GOLUB)]
    synth: SynthShape,
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Printed to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let subcommand = match &cli.command {
        Command::Run(_) => "run",
        Command::Bench(_) => "bench",
        Command::Verify(_) => "verify",
        Command::Synth(_) => "synth",
        Command::Worker => "worker",
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args, stdout, stderr),
        Command::Bench(args) => cmd_bench(args, stdout, stderr),
        Command::Verify(args) => cmd_verify(args, stdout),
        Command::Synth(args) => cmd_synth(args, stdout),
        Command::Worker => process::serve(io::stdin().lock(), io::stdout().lock())
            .map(|()| EXIT_OK)
            .map_err(Failure::from),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            let usage = cmd
                .find_subcommand_mut(subcommand)
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            let _ = writeln!(stderr, "error: {msg}\n\n{usage}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::EquivalenceViolation { .. } => EXIT_EQUIVALENCE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn load_source(source: &SourceArgs, seed: u64) -> Result<Dataset, Failure> {
    let source = match (&source.data, source.synth) {
        (Some(path), _) => DataSource::File(path.clone()),
        (None, Some(shape)) => DataSource::Synth { shape, seed },
        (None, None) => return Err(Failure::Usage("one of --data or --synth is required".into())),
    };
    Ok(source.load()?)
}

/// Statistic/view compatibility is a usage error, caught before any data is read.
fn resolve_stype(common: &CommonArgs) -> Result<Stype, Failure> {
    let stype = common.stype.unwrap_or_else(|| common.statistic.default_stype());
    common
        .statistic
        .check_view(stype)
        .map_err(|e| Failure::Usage(format!("{e} (--statistic {} --stype {})", common.statistic, stype.code())))?;
    if common.resamples == 0 {
        return Err(Failure::Usage("--resamples must be at least 1".into()));
    }
    Ok(stype)
}

fn limits(common: &CommonArgs) -> Result<EngineLimits, Failure> {
    EngineLimits::new(common.max_plan_bytes).map_err(|e| Failure::Usage(format!("--max-plan-bytes: {e}")))
}

fn write_output(path: Option<&PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(Error::io(path, e))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(Error::io("<stdout>", e))),
    }
}

fn cmd_run(args: RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let stype = resolve_stype(&args.common)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha must be in (0, 1), got {}", args.alpha)));
    }
    let workers = args.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let mode = ExecutionMode::parse(&args.mode, workers).map_err(Failure::Usage)?;
    let mut engine = Engine::new(limits(&args.common)?);
    let data = load_source(&args.common.source, args.common.seed)?;
    let request = RunRequest::new(args.common.resamples, stype, args.common.seed, mode);
    let result = engine.run(&data, &args.common.statistic, &request)?;
    let report = EstimateReport::new(&result.t0, &result.t, args.alpha)?;
    let t = result.timings;
    let _ = writeln!(
        stderr,
        "{} {} stype={} seed={}: plan {:.3} ms, scatter {:.3} ms, evaluate {:.3} ms, reduce {:.3} ms, total {:.3} ms",
        args.common.statistic,
        mode,
        stype.code(),
        result.seed,
        ms(t.plan_ns),
        ms(t.scatter_ns),
        ms(t.evaluate_ns),
        ms(t.reduce_ns),
        ms(t.total_ns),
    );
    write_output(None, &report.to_text(), stdout)?;
    if let Some(path) = &args.out {
        write_output(Some(path), &report.to_csv(), stdout)?;
    }
    Ok(EXIT_OK)
}

fn ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

fn cmd_bench(args: BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let stype = resolve_stype(&args.common)?;
    let plan = BenchPlan {
        statistic: args.common.statistic.clone(),
        resamples: vec![args.common.resamples],
        stype,
        seed: args.common.seed,
        workers: args.workers,
        reps: args.reps,
        modes: args.mode,
    };
    plan.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut engine = Engine::new(limits(&args.common)?);
    let data = load_source(&args.common.source, args.common.seed)?;
    let sweeps = bench::run_bench(&plan, &data, &mut engine)?;
    let mut records = Vec::new();
    for sweep in sweeps {
        records.extend(sweep.outcome?);
    }
    let _ = writeln!(stderr, "{:<13} {:>4} {:>12} {:>8} {:>5}", "mode", "p", "total ms", "speedup", "eff");
    for r in &records {
        let _ = writeln!(
            stderr,
            "{:<13} {:>4} {:>12.3} {:>8.3} {:>5}",
            r.mode.name(),
            r.p,
            ms(r.t_total_ns),
            r.speedup,
            bench::format_efficiency(r.efficiency())
        );
    }
    write_output(args.out.as_ref(), &bench::write_records(&records), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_verify(args: VerifyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let mut engine = Engine::default();
    let outcomes = verify::run_matrix(&mut engine, |o| {
        if args.verbose || !o.passed {
            let _ = writeln!(stdout, "{o}");
        }
    })?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(stdout, "{} of {} cases identical to serial", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_EQUIVALENCE })
}

fn cmd_synth(args: SynthArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let shape = args.synth;
    let (data, _) = synth_expression(shape.genes, shape.group1, shape.group2, args.seed)?;
    write_output(args.out.as_ref(), &render_table(&data), stdout)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("pboot").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn median_with_weights_is_usage_error() {
        let (code, _, err) = run(&["run", "--synth", "20x2+2", "--statistic", "median", "--resamples", "9", "--stype", "w"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("weights"), "{err}");
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn clap_errors_are_usage_errors() {
        assert_eq!(run(&["run", "--statistic", "mean", "--resamples", "9"]).0, EXIT_USAGE);
        assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run(&["run", "--synth", "20x2+2", "--statistic", "bogus", "--resamples", "9"]).0, EXIT_USAGE);
        assert_eq!(run(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn run_prints_report() {
        let (code, out, _) = run(&["run", "--synth", "30x2+2", "--statistic", "mean", "--resamples", "99", "--seed", "3"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("R = 99"), "{out}");
        assert!(out.contains("95% CI"), "{out}");
    }

    #[test]
    fn missing_file_is_runtime_error() {
        let (code, _, err) = run(&["run", "--data", "/nonexistent/x.csv", "--statistic", "mean", "--resamples", "9"]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.contains("/nonexistent/x.csv"));
    }

    #[test]
    fn plan_too_large_is_runtime_error() {
        let (code, _, err) = run(&[
            "run", "--synth", "30x2+2", "--statistic", "mean", "--resamples", "99", "--max-plan-bytes", "100",
        ]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.contains("max_plan_bytes"), "{err}");
    }

    #[test]
    fn synth_writes_table() {
        let (code, out, _) = run(&["synth", "--synth", "3x1+2", "--seed", "1"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().next(), Some("g1_0,g2_0,g2_1"));
        assert_eq!(out.lines().count(), 4);
    }
}
