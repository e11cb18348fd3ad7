use thiserror::Error;

/// Errors produced anywhere in the repartitioning pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed LDU: face {face}: {reason}")]
    MalformedLdu { face: usize, reason: String },

    #[error("malformed interface block toward rank {neighbor}: {reason}")]
    MalformedInterface { neighbor: usize, reason: String },

    #[error("malformed COO matrix: {0}")]
    MalformedCoo(String),

    #[error("invalid ratio: alpha = {alpha} does not divide n_cpu = {n_cpu}")]
    InvalidRatio { n_cpu: usize, alpha: usize },

    #[error("empty part: CPU rank {rank} has no cells")]
    EmptyPart { rank: usize },

    #[error("{what} {value} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("too many parts: {parts} parts requested but the cut axis has only {layers} layers")]
    TooManyParts { parts: usize, layers: usize },

    #[error("inconsistent interface on rank {rank}: {reason}")]
    InconsistentInterface { rank: usize, reason: String },

    #[error("overlapping ownership: entry ({row}, {col}) produced more than once")]
    OverlappingOwnership { row: usize, col: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("update pattern violation: source rank {source_rank} sent {got} coefficients, expected {expected}")]
    UpdatePatternViolation {
        source_rank: usize,
        expected: usize,
        got: usize,
    },

    #[error("pattern drift on rank {rank}: {detail}; the system must be repartitioned")]
    PatternDrift { rank: usize, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("device buffer owned by rank {owner} accessed from rank {rank}")]
    DeviceAccess { owner: usize, rank: usize },

    #[error("curve domain: n = {n} is outside the tabulated range")]
    CurveDomain { n: usize },

    #[error("empty search space: {0}")]
    EmptySearchSpace(String),

    #[error("{cores} cores cannot be split evenly over {gpus} GPUs; nearest divisible core count is {suggested}")]
    NonDivisibleTopology {
        cores: usize,
        gpus: usize,
        suggested: usize,
    },

    #[error("size guard exceeded: {size} exceeds the limit of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("reference solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rank {rank} failed: {message}")]
    RankFailed { rank: usize, message: String },

    #[error("deadlock: all live ranks blocked ({detail})")]
    Deadlock { detail: String },

    #[error("world aborted")]
    Aborted,

    #[error("message from rank {src} to rank {dest} has unexpected payload type (expected {expected})")]
    PayloadType {
        src: usize,
        dest: usize,
        expected: &'static str,
    },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
