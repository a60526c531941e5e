//! Parallel bootstrap execution.
//!
//! A run follows the same pipeline in every mode:
//!
//! 1. `t0` and the full resample plan are computed on the master, once.
//! 2. The plan is cut into contiguous per-rank blocks ([`partition`]) and,
//!    together with the dataset and statistic, handed to the workers.
//! 3. Each worker evaluates its rows in plan order into a [`LocalResults`].
//! 4. The local lists are combined pairwise up a binary tree
//!    ([`tree_reduce`]) by rank-ordered concatenation.
//!
//! Because the plan never depends on the mode or worker count and every row is
//! evaluated by the same code, `t0` and `t` are bit-identical across modes.

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plan::{count_into, weights_into, plan_bytes, ResamplePlan, RngConfig, Stype};
use crate::statistic::{PreparedStatistic, Scratch, StatisticSpec, ViewRef};

pub mod process;
pub mod wire;

/// Default ceiling on plan plus gathered results: 4 GiB.
pub const DEFAULT_MAX_PLAN_BYTES: u64 = 4 << 30;
/// Overrides the default worker count.
pub const WORKERS_ENV: &str = "PBOOT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecutionMode {
    Serial,
    Threaded(usize),
    MultiProcess(usize),
}

impl ExecutionMode {
    pub fn workers(self) -> usize {
        match self {
            ExecutionMode::Serial => 1,
            ExecutionMode::Threaded(k) | ExecutionMode::MultiProcess(k) => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExecutionMode::Serial => "serial",
            ExecutionMode::Threaded(_) => "threaded",
            ExecutionMode::MultiProcess(_) => "multiprocess",
        }
    }

    /// Parses `serial`, `threaded` or `multiprocess` with the given worker count.
    pub fn parse(name: &str, workers: usize) -> std::result::Result<Self, String> {
        match name {
            "serial" => Ok(ExecutionMode::Serial),
            "threaded" => Ok(ExecutionMode::Threaded(workers)),
            "multiprocess" => Ok(ExecutionMode::MultiProcess(workers)),
            _ => Err(format!("unknown mode {name:?} (expected serial, threaded or multiprocess)")),
        }
    }

    pub fn with_workers(self, k: usize) -> Self {
        match self {
            ExecutionMode::Serial => ExecutionMode::Serial,
            ExecutionMode::Threaded(_) => ExecutionMode::Threaded(k),
            ExecutionMode::MultiProcess(_) => ExecutionMode::MultiProcess(k),
        }
    }

    fn validate(self) -> Result<()> {
        if self.workers() == 0 {
            Err(Error::ZeroDimension("worker count"))
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecutionMode::Serial => f.write_str("serial"),
            ExecutionMode::Threaded(k) => write!(f, "threaded({k})"),
            ExecutionMode::MultiProcess(k) => write!(f, "multiprocess({k})"),
        }
    }
}

/// `PBOOT_WORKERS` if set and valid, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerBlock {
    pub rank: usize,
    pub start: usize,
    pub len: usize,
}

/// Contiguous near-equal blocks: the first `R mod k` ranks get one extra row.
/// Ranks beyond `R` get empty blocks.
pub fn partition(resamples: usize, workers: usize) -> Vec<WorkerBlock> {
    let workers = workers.max(1);
    let base = resamples / workers;
    let extra = resamples % workers;
    let mut start = 0;
    (0..workers)
        .map(|rank| {
            let len = base + usize::from(rank < extra);
            let block = WorkerBlock { rank, start, len };
            start += len;
            block
        })
        .collect()
}

/// `ceil(log2 k)`, the depth of a binary tree over `k` ranks.
pub fn tree_depth(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

/// Binary-tree fan-out from rank 0: at level `l` every rank `r < 2^(l-1)`
/// forwards to `r + 2^(l-1)`. Returns one `(source, destination)` list per level.
pub fn fanout_levels(k: usize) -> Vec<Vec<(usize, usize)>> {
    (1..=tree_depth(k))
        .map(|level| {
            let stride = 1usize << (level - 1);
            (0..stride)
                .map(|src| (src, src + stride))
                .filter(|&(_, dst)| dst < k)
                .collect()
        })
        .collect()
}

/// Replicates computed by one rank, `len` rows of `p` values in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResults {
    pub rank: usize,
    pub start: usize,
    pub p: usize,
    pub values: Vec<f64>,
}

impl LocalResults {
    pub fn empty(rank: usize, start: usize, p: usize) -> Self {
        Self {
            rank,
            start,
            p,
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.p).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `R x p` replicate statistics, row-major. Row `i` belongs to plan row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMatrix {
    rows: usize,
    p: usize,
    values: Vec<f64>,
}

impl ReplicateMatrix {
    pub fn new(rows: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * p {
            return Err(Error::DimensionMismatch {
                expected: rows * p,
                found: values.len(),
            });
        }
        Ok(Self { rows, p, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.p.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.p).copied().collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Index of the first row whose bits differ from `other`.
    pub fn first_difference(&self, other: &ReplicateMatrix) -> Option<usize> {
        if self.p != other.p || self.rows != other.rows {
            return Some(0);
        }
        (0..self.rows).find(|&i| {
            self.row(i)
                .iter()
                .zip(other.row(i))
                .any(|(a, b)| a.to_bits() != b.to_bits())
        })
    }
}

/// Combines `items` pairwise up a binary tree; `combine` must be associative.
///
/// At each level neighbours `(0,1), (2,3), ...` are merged and an odd tail is
/// carried up, so the result equals a left fold of the same items.
pub fn tree_combine<T, F>(items: Vec<T>, mut combine: F) -> Option<T>
where
    F: FnMut(T, T) -> T,
{
    let mut level = items;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(left) = it.next() {
            next.push(match it.next() {
                Some(right) => combine(left, right),
                None => left,
            });
        }
        level = next;
    }
    level.into_iter().next()
}

/// Gathers one [`LocalResults`] per rank into the full replicate matrix.
pub fn tree_reduce(locals: Vec<LocalResults>, k: usize) -> Result<ReplicateMatrix> {
    let mut slots: Vec<Option<LocalResults>> = vec![None; k];
    let mut p = None;
    for local in locals {
        let rank = local.rank;
        let expected = *p.get_or_insert(local.p);
        if local.p != expected || (local.p > 0 && local.values.len() % local.p != 0) {
            return Err(Error::DimensionMismatch {
                expected,
                found: local.p,
            });
        }
        match slots.get_mut(rank) {
            Some(slot @ None) => *slot = Some(local),
            Some(Some(prev)) => {
                return Err(Error::OverlappingBlocks {
                    rank,
                    start: local.start,
                    expected: prev.start,
                })
            }
            None => return Err(Error::MissingRank(rank)),
        }
    }
    let mut ordered = Vec::with_capacity(k);
    let mut next_start = 0;
    for (rank, slot) in slots.into_iter().enumerate() {
        let local = slot.ok_or(Error::MissingRank(rank))?;
        if local.start != next_start {
            return Err(Error::OverlappingBlocks {
                rank,
                start: local.start,
                expected: next_start,
            });
        }
        next_start += local.len();
        ordered.push(local);
    }
    let p = p.ok_or(Error::MissingRank(0))?;
    let merged = tree_combine(ordered, |mut left, mut right| {
        left.values.append(&mut right.values);
        left
    })
    .ok_or(Error::MissingRank(0))?;
    ReplicateMatrix::new(next_start, p, merged.values)
}

/// Lowest rank that has failed so far; higher ranks stop early.
#[derive(Debug)]
pub(crate) struct FailureFloor(AtomicUsize);

impl FailureFloor {
    pub(crate) fn new() -> Self {
        Self(AtomicUsize::new(usize::MAX))
    }

    fn record(&self, rank: usize) {
        self.0.fetch_min(rank, Ordering::Relaxed);
    }

    fn should_stop(&self, rank: usize) -> bool {
        self.0.load(Ordering::Relaxed) < rank
    }
}

/// Evaluates plan rows `rows` (row-major, `n` per row) for one rank.
pub fn evaluate_block(
    stat: &PreparedStatistic<'_>,
    block: WorkerBlock,
    rows: &[u64],
    stype: Stype,
) -> Result<LocalResults> {
    evaluate_block_inner(stat, block, rows, stype, None)
}

pub(crate) fn evaluate_block_inner(
    stat: &PreparedStatistic<'_>,
    block: WorkerBlock,
    rows: &[u64],
    stype: Stype,
    floor: Option<&FailureFloor>,
) -> Result<LocalResults> {
    let n = stat.data().n();
    let p = stat.dimension();
    if rows.len() != block.len * n {
        return Err(Error::ViewLength {
            expected: block.len * n,
            found: rows.len(),
        });
    }
    let mut values = vec![0.0; block.len * p];
    let mut scratch = Scratch::default();
    let mut freq = vec![0u64; if stype == Stype::Indices { 0 } else { n }];
    let mut weights = vec![0.0; if stype == Stype::Weights { n } else { 0 }];
    let annotate = |i: usize, source: Error| Error::Resample {
        rank: block.rank,
        resample: block.start + i,
        source: Box::new(source),
    };
    for (i, (row, out)) in rows.chunks_exact(n).zip(values.chunks_exact_mut(p)).enumerate() {
        if floor.is_some_and(|f| f.should_stop(block.rank)) {
            return Ok(LocalResults::empty(block.rank, block.start, p));
        }
        let view = match stype {
            Stype::Indices => ViewRef::Indices(row),
            Stype::Frequencies => {
                count_into(row, &mut freq).map_err(|e| annotate(i, e))?;
                ViewRef::Frequencies(&freq)
            }
            Stype::Weights => {
                count_into(row, &mut freq).map_err(|e| annotate(i, e))?;
                weights_into(&freq, &mut weights).map_err(|e| annotate(i, e))?;
                ViewRef::Weights(&weights)
            }
        };
        stat.eval_into(view, &mut scratch, out).map_err(|e| annotate(i, e))?;
    }
    Ok(LocalResults {
        rank: block.rank,
        start: block.start,
        p,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineLimits {
    /// Ceiling on `plan_bytes(n, R) + R * p * 8`.
    pub max_plan_bytes: u64,
}

impl Default for EngineLimits {
    fn default() -> Self {
        Self {
            max_plan_bytes: DEFAULT_MAX_PLAN_BYTES,
        }
    }
}

impl EngineLimits {
    pub fn new(max_plan_bytes: u64) -> Result<Self> {
        if max_plan_bytes == 0 {
            return Err(Error::ZeroDimension("max_plan_bytes"));
        }
        Ok(Self { max_plan_bytes })
    }

    /// Bytes the master holds for a run: the plan and the gathered `t`.
    pub fn required_bytes(n: usize, resamples: usize, p: usize) -> Result<u64> {
        let results = (resamples as u64)
            .checked_mul(p as u64)
            .and_then(|c| c.checked_mul(8))
            .ok_or(Error::ArithmeticOverflow("result bytes"))?;
        plan_bytes(n, resamples)?
            .checked_add(results)
            .ok_or(Error::ArithmeticOverflow("run bytes"))
    }

    pub fn check(&self, n: usize, resamples: usize, p: usize) -> Result<u64> {
        let required = Self::required_bytes(n, resamples, p)?;
        if required > self.max_plan_bytes {
            Err(Error::PlanTooLarge {
                required,
                ceiling: self.max_plan_bytes,
            })
        } else {
            Ok(required)
        }
    }
}

/// How MultiProcess workers are started.
#[derive(Clone, Default)]
pub enum Launcher {
    /// `PBOOT_WORKER_EXE`, else the running `pboot` binary or one beside it.
    #[default]
    Auto,
    /// Runs `<path> worker`.
    Executable(PathBuf),
    /// Runs the worker loop on a thread over in-memory pipes.
    InProcess,
    /// Builds the command for each rank; stdin and stdout are replaced by pipes.
    Custom(Arc<dyn Fn(usize) -> std::process::Command + Send + Sync>),
}

impl fmt::Debug for Launcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Launcher::Auto => f.write_str("Auto"),
            Launcher::Executable(p) => f.debug_tuple("Executable").field(p).finish(),
            Launcher::InProcess => f.write_str("InProcess"),
            Launcher::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunRequest {
    pub resamples: usize,
    pub stype: Stype,
    pub seed: u64,
    pub mode: ExecutionMode,
}

impl RunRequest {
    pub fn new(resamples: usize, stype: Stype, seed: u64, mode: ExecutionMode) -> Self {
        Self {
            resamples,
            stype,
            seed,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimings {
    pub plan_ns: u64,
    pub scatter_ns: u64,
    pub evaluate_ns: u64,
    pub reduce_ns: u64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootResult {
    pub t0: Vec<f64>,
    pub t: ReplicateMatrix,
    pub resamples: usize,
    pub stype: Stype,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub timings: PhaseTimings,
    /// Tree levels used to deliver data to workers (0 when shared by reference).
    pub scatter_levels: usize,
    pub reduce_levels: usize,
}

impl BootResult {
    /// Same `t0` and `t`, bit for bit.
    pub fn same_values(&self, other: &BootResult) -> bool {
        bits_equal(&self.t0, &other.t0) && self.t.first_difference(&other.t).is_none()
    }
}

pub(crate) fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn nanos(since: Instant) -> u64 {
    since.elapsed().as_nanos().min(u128::from(u64::MAX)) as u64
}

/// Runs one bootstrap at a time; holds limits, the worker launcher and a
/// count of plan generations.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    limits: EngineLimits,
    launcher: Launcher,
    plan_generations: u64,
}

impl Engine {
    pub fn new(limits: EngineLimits) -> Self {
        Self {
            limits,
            ..Self::default()
        }
    }

    pub fn with_launcher(mut self, launcher: Launcher) -> Self {
        self.launcher = launcher;
        self
    }

    pub fn limits(&self) -> EngineLimits {
        self.limits
    }

    pub fn plan_generations(&self) -> u64 {
        self.plan_generations
    }

    pub fn run(&mut self, data: &Dataset, spec: &StatisticSpec, request: &RunRequest) -> Result<BootResult> {
        let started = Instant::now();
        let RunRequest {
            resamples,
            stype,
            seed,
            mode,
        } = *request;
        mode.validate()?;
        if resamples == 0 {
            return Err(Error::ZeroDimension("R"));
        }
        spec.check_view(stype)?;
        let stat = PreparedStatistic::new(spec, data)?;
        let t0 = stat.t0(stype)?;
        let p = t0.len();
        self.limits.check(data.n(), resamples, p)?;

        let phase = Instant::now();
        let plan = ResamplePlan::generate(data.n(), resamples, RngConfig::new(seed))?;
        self.plan_generations += 1;
        let plan_ns = nanos(phase);

        let k = mode.workers();
        let blocks = partition(resamples, k);
        let (locals, scatter_ns, evaluate_ns, scatter_levels) = match mode {
            ExecutionMode::Serial => {
                let phase = Instant::now();
                let local = evaluate_block(&stat, blocks[0], plan.as_flat(), stype)?;
                (vec![local], 0, nanos(phase), 0)
            }
            ExecutionMode::Threaded(_) => {
                let (locals, scatter, eval) = run_threaded(&stat, &plan, &blocks, stype)?;
                (locals, scatter, eval, 0)
            }
            ExecutionMode::MultiProcess(_) => {
                let out = process::run_multiprocess(&self.launcher, data, spec, &plan, &blocks, stype, p)?;
                (out.locals, out.scatter_ns, out.evaluate_ns, tree_depth(k))
            }
        };

        let phase = Instant::now();
        let t = tree_reduce(locals, k)?;
        let reduce_ns = nanos(phase);
        if t.rows() != resamples {
            return Err(Error::DimensionMismatch {
                expected: resamples,
                found: t.rows(),
            });
        }
        Ok(BootResult {
            t0,
            t,
            resamples,
            stype,
            seed,
            mode,
            timings: PhaseTimings {
                plan_ns,
                scatter_ns,
                evaluate_ns,
                reduce_ns,
                total_ns: nanos(started),
            },
            scatter_levels,
            reduce_levels: tree_depth(k),
        })
    }
}

fn run_threaded(
    stat: &PreparedStatistic<'_>,
    plan: &ResamplePlan,
    blocks: &[WorkerBlock],
    stype: Stype,
) -> Result<(Vec<LocalResults>, u64, u64)> {
    let floor = FailureFloor::new();
    // Workers hold at the gate until every slice is handed out, so the
    // scatter interval does not absorb evaluation on busy machines.
    let gate = RwLock::new(());
    let phase = Instant::now();
    let (outcomes, scatter_ns, eval_start) = std::thread::scope(|scope| {
        let closed = gate.write().unwrap_or_else(|e| e.into_inner());
        let mut handles = Vec::with_capacity(blocks.len());
        for &block in blocks {
            let rows = plan.block(block.start, block.len);
            let (floor, gate) = (&floor, &gate);
            let spawned = std::thread::Builder::new()
                .name(format!("pboot-worker-{}", block.rank))
                .spawn_scoped(scope, move || {
                    drop(gate.read());
                    let out = evaluate_block_inner(stat, block, rows, stype, Some(floor));
                    if out.is_err() {
                        floor.record(block.rank);
                    }
                    out
                });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => {
                    floor.record(0);
                    let err = Error::WorkerSpawnFailure {
                        rank: block.rank,
                        message: e.to_string(),
                    };
                    drop(closed);
                    for h in handles {
                        let _ = h.join();
                    }
                    return (vec![Err(err)], 0, Instant::now());
                }
            }
        }
        let scatter_ns = nanos(phase);
        let eval_start = Instant::now();
        drop(closed);
        let outcomes: Vec<Result<LocalResults>> = handles
            .into_iter()
            .zip(blocks)
            .map(|(h, b)| {
                h.join().unwrap_or_else(|_| {
                    Err(Error::Resample {
                        rank: b.rank,
                        resample: b.start,
                        source: Box::new(Error::Remote("worker thread panicked".into())),
                    })
                })
            })
            .collect();
        (outcomes, scatter_ns, eval_start)
    });
    let evaluate_ns = nanos(eval_start);
    // Lowest-rank failure wins, which is also the first failing resample.
    let locals = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((locals, scatter_ns, evaluate_ns))
}

/// Runs with default limits and launcher.
pub fn run_bootstrap(data: &Dataset, spec: &StatisticSpec, request: &RunRequest) -> Result<BootResult> {
    Engine::default().run(data, spec, request)
}
