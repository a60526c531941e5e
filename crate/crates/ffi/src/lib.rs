//! C interface to the pboot engine.
//!
//! Every fallible call returns a [`PbootStatus`]; on failure the message is
//! available from [`pboot_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.
//!
//! MultiProcess runs start `pboot worker` children, located through the
//! `PBOOT_WORKER_EXE` environment variable when the host is not `pboot`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pboot::engine::{Engine, EngineLimits, ExecutionMode, RunRequest, DEFAULT_MAX_PLAN_BYTES};
use pboot::{BootResult, Dataset, Error, EstimateReport, StatisticSpec, Stype};

/// Call outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbootStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DataError = 3,
    StatisticError = 4,
    PlanTooLarge = 5,
    WorkerError = 6,
    EstimateError = 7,
    IoError = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbootMode {
    Serial = 0,
    Threaded = 1,
    MultiProcess = 2,
}

/// Phase durations of one run, nanoseconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PbootTimings {
    pub plan_ns: u64,
    pub scatter_ns: u64,
    pub evaluate_ns: u64,
    pub reduce_ns: u64,
    pub total_ns: u64,
}

/// Estimates for one output dimension.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PbootEstimate {
    pub t0: f64,
    pub bias: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Opaque dataset handle.
pub struct PbootDataset {
    inner: Dataset,
}

/// Opaque result handle.
pub struct PbootResult {
    inner: BootResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(bytes).unwrap_or_default());
}

fn status_of(err: &Error) -> PbootStatus {
    use Error::*;
    match err {
        MissingFile(_) | Io { .. } => PbootStatus::IoError,
        RaggedRow { .. }
        | NonNumericField { .. }
        | NonFiniteValue { .. }
        | EmptyTable
        | InvalidColumnName(_)
        | DuplicateColumn(_)
        | ColumnLength { .. }
        | ZeroDimension(_)
        | IndexOutOfRange { .. }
        | ZeroTotal
        | ArithmeticOverflow(_) => PbootStatus::DataError,
        PlanTooLarge { .. } => PbootStatus::PlanTooLarge,
        UnknownColumn(_)
        | UnsupportedView { .. }
        | InsufficientObservations { .. }
        | ViewLength { .. }
        | DimensionMismatch { .. }
        | NonFiniteReplicate { .. }
        | InvalidStatistic(_) => PbootStatus::StatisticError,
        Resample { source, .. } => match status_of(source) {
            PbootStatus::WorkerError => PbootStatus::StatisticError,
            s => s,
        },
        Remote(_)
        | WorkerSpawnFailure { .. }
        | ChannelClosed { .. }
        | Protocol { .. }
        | FrameTooLarge { .. }
        | MissingRank(_)
        | OverlappingBlocks { .. }
        | EquivalenceViolation { .. } => PbootStatus::WorkerError,
        EmptyReplicates | InsufficientReplicates { .. } | AlphaOutOfRange(_) => PbootStatus::EstimateError,
        ZeroTime => PbootStatus::InvalidArgument,
        PlanFormat(_) | RecordFormat(_) => PbootStatus::IoError,
        #[allow(unreachable_patterns)]
        _ => PbootStatus::InvalidArgument,
    }
}

enum Fail {
    Status(PbootStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(PbootStatus::NullArgument, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Status(PbootStatus::InvalidArgument, msg.into())
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PbootStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PbootStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PbootStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_handle<T>(value: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pboot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or "" after a success.
/// Valid until the next pboot call on the same thread.
#[no_mangle]
pub extern "C" fn pboot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a dataset from `ncols` columns of `nrows` values each.
///
/// # Safety
/// `names` holds `ncols` NUL-terminated strings, `columns` holds `ncols`
/// pointers to `nrows` doubles each, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_from_columns(
    names: *const *const c_char,
    columns: *const *const f64,
    ncols: usize,
    nrows: usize,
    out: *mut *mut PbootDataset,
) -> PbootStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if ncols > 0 && (names.is_null() || columns.is_null()) {
            return Err(null("names or columns"));
        }
        let mut cols = Vec::with_capacity(ncols);
        for j in 0..ncols {
            let name = str_arg(*names.add(j), "column name")?;
            let values = *columns.add(j);
            if values.is_null() && nrows > 0 {
                return Err(null("column values"));
            }
            let values = if nrows == 0 { Vec::new() } else { std::slice::from_raw_parts(values, nrows).to_vec() };
            cols.push((name.to_owned(), values));
        }
        into_handle(PbootDataset { inner: Dataset::new(cols)? }, out);
        Ok(())
    })
}

/// Loads a CSV table with a header row.
///
/// # Safety
/// `path` is a NUL-terminated string and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_load_csv(path: *const c_char, out: *mut *mut PbootDataset) -> PbootStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        into_handle(PbootDataset { inner: pboot::load_table(path)? }, out);
        Ok(())
    })
}

/// Synthetic expression matrix: `genes` rows, `group1 + group2` sample columns.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_synth(
    genes: usize,
    group1: usize,
    group2: usize,
    seed: u64,
    out: *mut *mut PbootDataset,
) -> PbootStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let (data, _) = pboot::synth_expression(genes, group1, group2, seed)?;
        into_handle(PbootDataset { inner: data }, out);
        Ok(())
    })
}

/// Number of observations, 0 for a null handle.
///
/// # Safety
/// `data` is null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_nrows(data: *const PbootDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n())
}

/// Number of columns, 0 for a null handle.
///
/// # Safety
/// `data` is null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_ncols(data: *const PbootDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.num_columns())
}

/// # Safety
/// `data` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pboot_dataset_free(data: *mut PbootDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs one bootstrap.
///
/// `statistic` uses the command-line syntax (`median`, `ratio:x:u`, ...).
/// `stype` is `'i'`, `'f'`, `'w'` or 0 for the statistic's default.
/// `workers` is ignored for serial runs; `max_plan_bytes` 0 means the default.
///
/// # Safety
/// `data` is a live dataset handle, `statistic` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_run(
    data: *const PbootDataset,
    statistic: *const c_char,
    resamples: usize,
    stype: c_char,
    seed: u64,
    mode: PbootMode,
    workers: usize,
    max_plan_bytes: u64,
    out: *mut *mut PbootResult,
) -> PbootStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let spec: StatisticSpec = str_arg(statistic, "statistic")?.parse()?;
        let stype = match stype as u8 {
            0 => spec.default_stype(),
            c => (c as char)
                .to_string()
                .parse::<Stype>()
                .map_err(|_| invalid(format!("unknown stype {:?}", c as char)))?,
        };
        let mode = match mode {
            PbootMode::Serial => ExecutionMode::Serial,
            PbootMode::Threaded => ExecutionMode::Threaded(workers),
            PbootMode::MultiProcess => ExecutionMode::MultiProcess(workers),
        };
        let limits = EngineLimits::new(if max_plan_bytes == 0 { DEFAULT_MAX_PLAN_BYTES } else { max_plan_bytes })?;
        let result = Engine::new(limits).run(&data.inner, &spec, &RunRequest::new(resamples, stype, seed, mode))?;
        into_handle(PbootResult { inner: result }, out);
        Ok(())
    })
}

/// Output dimension `p`, 0 for a null handle.
///
/// # Safety
/// `result` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_dimension(result: *const PbootResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.t.dimension())
}

/// Number of replicate rows `R`, 0 for a null handle.
///
/// # Safety
/// `result` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_resamples(result: *const PbootResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.t.rows())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if len < src.len() {
        return Err(Fail::Status(
            PbootStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// Copies `t0` (`p` values) into `buf`.
///
/// # Safety
/// `result` is a live result handle and `buf` has room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_t0(result: *const PbootResult, buf: *mut f64, len: usize) -> PbootStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.inner.t0, buf, len)
    })
}

/// Copies the `R x p` replicates, row-major, into `buf`.
///
/// # Safety
/// `result` is a live result handle and `buf` has room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_replicates(result: *const PbootResult, buf: *mut f64, len: usize) -> PbootStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(r.inner.t.as_flat(), buf, len)
    })
}

/// # Safety
/// `result` is a live result handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_timings(result: *const PbootResult, out: *mut PbootTimings) -> PbootStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let t = r.inner.timings;
        *out_arg(out, "out")? = PbootTimings {
            plan_ns: t.plan_ns,
            scatter_ns: t.scatter_ns,
            evaluate_ns: t.evaluate_ns,
            reduce_ns: t.reduce_ns,
            total_ns: t.total_ns,
        };
        Ok(())
    })
}

/// Bias, standard error and percentile interval at level `1 - alpha`, one
/// entry per dimension.
///
/// # Safety
/// `result` is a live result handle and `buf` has room for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_estimates(
    result: *const PbootResult,
    alpha: f64,
    buf: *mut PbootEstimate,
    len: usize,
) -> PbootStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let report = EstimateReport::new(&r.inner.t0, &r.inner.t, alpha)?;
        if len < report.dimensions.len() {
            return Err(Fail::Status(
                PbootStatus::BufferTooSmall,
                format!("buffer holds {len} entries, {} needed", report.dimensions.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        for (j, d) in report.dimensions.iter().enumerate() {
            *buf.add(j) = PbootEstimate {
                t0: d.t0,
                bias: d.bias,
                se: d.se,
                ci_lower: d.ci_lower,
                ci_upper: d.ci_upper,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `result` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pboot_result_free(result: *mut PbootResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// `t_serial / t_p`; both times must be positive.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pboot_speedup(t_serial: f64, t_p: f64, out: *mut f64) -> PbootStatus {
    guard(|| {
        *out_arg(out, "out")? = pboot::bench::compute_speedup(t_serial, t_p)?;
        Ok(())
    })
}

/// `speedup / p`.
#[no_mangle]
pub extern "C" fn pboot_efficiency(speedup: f64, p: usize) -> f64 {
    pboot::bench::compute_efficiency(speedup, p)
}
