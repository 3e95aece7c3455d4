use alloc::string::String;

/// Errors raised by the core kernels and the training loop.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("{cols} columns are not divisible by group size {group_size}")]
    Indivisible { cols: usize, group_size: usize },
    #[error("group size must be at least 1")]
    ZeroGroupSize,
    #[error("mask is not constant within groups of {group_size} (row {row}, group {group})")]
    MaskNotGroupConstant {
        group_size: usize,
        row: usize,
        group: usize,
    },
    #[error("Cholesky diagonal entry {index} is not positive ({value})")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: u64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
