//! Speedup and efficiency sweeps over execution modes and worker counts.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::dataset::{load_table, synth_expression, Dataset, SynthShape};
use crate::engine::{BootResult, Engine, ExecutionMode, PhaseTimings, RunRequest};
use crate::error::{Error, Result};
use crate::plan::Stype;
use crate::statistic::StatisticSpec;

pub const RECORD_CSV_HEADER: &str =
    "mode,p,reps,t_plan_ns,t_scatter_ns,t_eval_ns,t_reduce_ns,t_total_ns,speedup,efficiency";

/// `S = T_serial / T_p`; any consistent time unit.
pub fn compute_speedup(t_serial: f64, t_p: f64) -> Result<f64> {
    if !(t_serial > 0.0 && t_p > 0.0) {
        return Err(Error::ZeroTime);
    }
    Ok(t_serial / t_p)
}

/// `E = S / p`.
pub fn compute_efficiency(speedup: f64, p: usize) -> f64 {
    speedup / p.max(1) as f64
}

/// Efficiency as a whole percentage, e.g. `0.7184 -> "72%"`.
pub fn format_efficiency(efficiency: f64) -> String {
    format!("{}%", (efficiency * 100.0).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Serial,
    Threaded,
    MultiProcess,
}

impl ModeKind {
    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Serial => "serial",
            ModeKind::Threaded => "threaded",
            ModeKind::MultiProcess => "multiprocess",
        }
    }

    pub fn with_workers(self, k: usize) -> ExecutionMode {
        match self {
            ModeKind::Serial => ExecutionMode::Serial,
            ModeKind::Threaded => ExecutionMode::Threaded(k),
            ModeKind::MultiProcess => ExecutionMode::MultiProcess(k),
        }
    }
}

impl std::str::FromStr for ModeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "serial" => Ok(ModeKind::Serial),
            "threaded" => Ok(ModeKind::Threaded),
            "multiprocess" => Ok(ModeKind::MultiProcess),
            _ => Err(format!("unknown mode {s:?} (expected serial, threaded or multiprocess)")),
        }
    }
}

/// One measured point. Efficiency is derived from speedup and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub mode: ModeKind,
    pub p: usize,
    pub reps: usize,
    pub t_plan_ns: u64,
    pub t_scatter_ns: u64,
    pub t_eval_ns: u64,
    pub t_reduce_ns: u64,
    pub t_total_ns: u64,
    pub speedup: f64,
}

impl BenchRecord {
    pub fn efficiency(&self) -> f64 {
        compute_efficiency(self.speedup, self.p)
    }

    /// Fraction of the total spent evaluating the statistic.
    pub fn eval_fraction(&self) -> f64 {
        self.t_eval_ns as f64 / self.t_total_ns.max(1) as f64
    }

    /// Data distribution plus results gathering.
    pub fn overhead_ns(&self) -> u64 {
        self.t_scatter_ns + self.t_reduce_ns
    }
}

pub fn write_records(records: &[BenchRecord]) -> String {
    let mut out = String::from(RECORD_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:?},{:?}",
            r.mode.name(),
            r.p,
            r.reps,
            r.t_plan_ns,
            r.t_scatter_ns,
            r.t_eval_ns,
            r.t_reduce_ns,
            r.t_total_ns,
            r.speedup,
            r.efficiency()
        );
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<BenchRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORD_CSV_HEADER) {
        return Err(Error::RecordFormat("missing or wrong header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| parse_record(line).map_err(|m| Error::RecordFormat(format!("line {}: {m}", i + 2))))
        .collect()
}

fn parse_record(line: &str) -> std::result::Result<BenchRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err(format!("expected 10 fields, found {}", f.len()));
    }
    let int = |i: usize| f[i].parse::<u64>().map_err(|e| format!("field {}: {e}", i + 1));
    let float = |i: usize| f[i].parse::<f64>().map_err(|e| format!("field {}: {e}", i + 1));
    let record = BenchRecord {
        mode: f[0].parse()?,
        p: int(1)? as usize,
        reps: int(2)? as usize,
        t_plan_ns: int(3)?,
        t_scatter_ns: int(4)?,
        t_eval_ns: int(5)?,
        t_reduce_ns: int(6)?,
        t_total_ns: int(7)?,
        speedup: float(8)?,
    };
    if record.p == 0 {
        return Err("p must be at least 1".into());
    }
    if float(9)?.to_bits() != record.efficiency().to_bits() {
        return Err("efficiency is not speedup / p".into());
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synth { shape: SynthShape, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::File(path) => load_table(path),
            DataSource::Synth { shape, seed } => {
                synth_expression(shape.genes, shape.group1, shape.group2, *seed).map(|(d, _)| d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub statistic: StatisticSpec,
    /// Swept in order; each value gets its own serial baseline.
    pub resamples: Vec<usize>,
    pub stype: Stype,
    pub seed: u64,
    /// Strictly increasing. A count of 1 is the serial baseline.
    pub workers: Vec<usize>,
    pub reps: usize,
    pub modes: Vec<ModeKind>,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::ZeroDimension("repetitions"));
        }
        if self.resamples.is_empty() || self.resamples.contains(&0) {
            return Err(Error::ZeroDimension("R"));
        }
        if self.workers.is_empty() || self.workers.contains(&0) {
            return Err(Error::ZeroDimension("worker count"));
        }
        if self.workers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStatistic(format!(
                "worker counts must be strictly increasing: {:?}",
                self.workers
            )));
        }
        self.statistic.check_view(self.stype)
    }

    /// Points measured for one `R`, in sweep order; serial first.
    pub fn points(&self) -> Vec<ExecutionMode> {
        let mut points = vec![ExecutionMode::Serial];
        for &mode in &self.modes {
            if mode == ModeKind::Serial {
                continue;
            }
            points.extend(self.workers.iter().filter(|&&k| k > 1).map(|&k| mode.with_workers(k)));
        }
        points
    }
}

/// Records for one resample count, or why that count could not run.
#[derive(Debug)]
pub struct BenchSweep {
    pub resamples: usize,
    pub outcome: Result<Vec<BenchRecord>>,
}

/// Runs the sweep: per point one untimed warmup and `reps` timed runs, the
/// median total standing for the point. Every run must reproduce the serial
/// `t0` and `t` exactly, otherwise the sweep is aborted.
pub fn run_bench(plan: &BenchPlan, data: &Dataset, engine: &mut Engine) -> Result<Vec<BenchSweep>> {
    plan.validate()?;
    let mut sweeps = Vec::with_capacity(plan.resamples.len());
    for &resamples in &plan.resamples {
        match sweep_one(plan, data, engine, resamples) {
            Err(err @ Error::EquivalenceViolation { .. }) => return Err(err),
            Err(err @ Error::PlanTooLarge { .. }) => sweeps.push(BenchSweep {
                resamples,
                outcome: Err(err),
            }),
            Err(err) => return Err(err),
            Ok(records) => sweeps.push(BenchSweep {
                resamples,
                outcome: Ok(records),
            }),
        }
    }
    Ok(sweeps)
}

fn sweep_one(plan: &BenchPlan, data: &Dataset, engine: &mut Engine, resamples: usize) -> Result<Vec<BenchRecord>> {
    let mut baseline: Option<(BootResult, u64)> = None;
    let mut records = Vec::new();
    for mode in plan.points() {
        let request = RunRequest::new(resamples, plan.stype, plan.seed, mode);
        let warmup = engine.run(data, &plan.statistic, &request)?;
        if let Some((reference, _)) = &baseline {
            check_equivalent(reference, &warmup)?;
        }
        let mut timings = Vec::with_capacity(plan.reps);
        for _ in 0..plan.reps {
            let result = engine.run(data, &plan.statistic, &request)?;
            check_equivalent(baseline.as_ref().map_or(&warmup, |(r, _)| r), &result)?;
            timings.push(result.timings);
        }
        let point = median_timings(&mut timings);
        let serial_total = match &baseline {
            Some((_, total)) => *total,
            None => point.total_ns,
        };
        let speedup = compute_speedup(serial_total.max(1) as f64, point.total_ns.max(1) as f64)?;
        records.push(BenchRecord {
            mode: match mode {
                ExecutionMode::Serial => ModeKind::Serial,
                ExecutionMode::Threaded(_) => ModeKind::Threaded,
                ExecutionMode::MultiProcess(_) => ModeKind::MultiProcess,
            },
            p: mode.workers(),
            reps: plan.reps,
            t_plan_ns: point.plan_ns,
            t_scatter_ns: point.scatter_ns,
            t_eval_ns: point.evaluate_ns,
            t_reduce_ns: point.reduce_ns,
            t_total_ns: point.total_ns,
            speedup,
        });
        if baseline.is_none() {
            baseline = Some((warmup, point.total_ns));
        }
    }
    Ok(records)
}

fn check_equivalent(reference: &BootResult, result: &BootResult) -> Result<()> {
    let row = if crate::engine::bits_equal(&reference.t0, &result.t0) {
        reference.t.first_difference(&result.t)
    } else {
        Some(0)
    };
    match row {
        None => Ok(()),
        Some(row) => Err(Error::EquivalenceViolation {
            mode: result.mode.name().to_owned(),
            workers: result.mode.workers(),
            row,
        }),
    }
}

/// Median run by total time; an even count averages the two middle runs.
pub fn median_timings(runs: &mut [PhaseTimings]) -> PhaseTimings {
    runs.sort_by_key(|t| t.total_ns);
    let len = runs.len();
    if len % 2 == 1 {
        return runs[len / 2];
    }
    let (a, b) = (runs[len / 2 - 1], runs[len / 2]);
    let avg = |x: u64, y: u64| x / 2 + y / 2 + (x % 2 + y % 2) / 2;
    PhaseTimings {
        plan_ns: avg(a.plan_ns, b.plan_ns),
        scatter_ns: avg(a.scatter_ns, b.scatter_ns),
        evaluate_ns: avg(a.evaluate_ns, b.evaluate_ns),
        reduce_ns: avg(a.reduce_ns, b.reduce_ns),
        total_ns: avg(a.total_ns, b.total_ns),
    }
}
