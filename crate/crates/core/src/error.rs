use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("image buffer has {len} values, expected {height}x{width}")]
    BadImageBuffer {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("pixel index {index} out of range for {len} pixels")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("row {0} has zero sum")]
    ZeroRow(usize),
    #[error("column {0} has zero sum")]
    ZeroColumn(usize),
    #[error("cluster {0} has zero responsibility mass")]
    EmptyCluster(usize),
    #[error("cross-validation bracket invalid: delta({k_lo}) = {delta_lo}, delta({k_hi}) = {delta_hi}; widen the bracket so that delta(k_lo) > 1 > delta(k_hi)")]
    InvalidBracket {
        k_lo: usize,
        k_hi: usize,
        delta_lo: f64,
        delta_hi: f64,
    },
    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStalled { iterations: usize, residual: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}
