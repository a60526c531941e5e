use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: not a number: {value:?}")]
    NonNumericField {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("line {line}, column {column}: value is not finite")]
    NonFiniteValue { line: usize, column: usize },

    #[error("table has no observations")]
    EmptyTable,

    #[error("invalid column name {0:?}")]
    InvalidColumnName(String),

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("column {name:?} has {found} values, expected {expected}")]
    ColumnLength {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("{0} must be at least 1")]
    ZeroDimension(&'static str),

    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: u64, n: usize },

    #[error("frequency vector sums to zero")]
    ZeroTotal,

    #[error("arithmetic overflow computing {0}")]
    ArithmeticOverflow(&'static str),

    #[error(
        "resample plan too large: {required} bytes required (plan + gathered results), \
         ceiling is {ceiling} bytes (max_plan_bytes)"
    )]
    PlanTooLarge { required: u64, ceiling: u64 },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("statistic {statistic} does not accept the {stype} view")]
    UnsupportedView {
        statistic: String,
        stype: &'static str,
    },

    #[error("statistic {statistic} needs at least {need} observations, got {have}")]
    InsufficientObservations {
        statistic: String,
        need: usize,
        have: usize,
    },

    #[error("sample view has length {found}, dataset has n = {expected}")]
    ViewLength { expected: usize, found: usize },

    #[error("replicate has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("statistic produced a non-finite value ({value}) in dimension {dimension}")]
    NonFiniteReplicate { dimension: usize, value: f64 },

    #[error("invalid statistic {0:?}")]
    InvalidStatistic(String),

    #[error("rank {rank}, resample {resample}: {source}")]
    Resample {
        rank: usize,
        resample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Remote(String),

    #[error("failed to start worker {rank}: {message}")]
    WorkerSpawnFailure { rank: usize, message: String },

    #[error("channel to worker {rank} closed")]
    ChannelClosed { rank: usize },

    #[error("protocol error with worker {rank}: {message}")]
    Protocol { rank: usize, message: String },

    #[error("frame payload of {size} bytes exceeds the 32-bit length prefix")]
    FrameTooLarge { size: u64 },

    #[error("no results for rank {0}")]
    MissingRank(usize),

    #[error("block of rank {rank} starts at {start}, expected {expected}")]
    OverlappingBlocks {
        rank: usize,
        start: usize,
        expected: usize,
    },

    #[error("no replicates")]
    EmptyReplicates,

    #[error("need at least {need} replicates, have {have}")]
    InsufficientReplicates { need: usize, have: usize },

    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),

    #[error("timings must be positive")]
    ZeroTime,

    #[error("{mode} with {workers} workers differs from serial at replicate {row}")]
    EquivalenceViolation {
        mode: String,
        workers: usize,
        row: usize,
    },

    #[error("invalid plan file: {0}")]
    PlanFormat(String),

    #[error("invalid record file: {0}")]
    RecordFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
