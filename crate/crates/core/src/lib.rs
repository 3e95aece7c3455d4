//! Structured-sparsity toolkit: SIMD-size-aware group regularization, gradual
//! group-magnitude pruning, block-sparse matrix-vector kernels and a small
//! autoregressive multi-sample GRU decoder used to exercise them end to end.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod linalg;
pub mod pruning;
pub mod real;
pub mod regularizers;

pub use error::{Error, Result};
pub use linalg::{gemv, saxpy, DenseMatrix, DenseVector, Matrix, Vector};
pub use pruning::{
    apply_mask, compute_group_mask, pruning_step, MaskStore, PruneMask, PruneSchedule,
};
pub use real::Real;
pub use regularizers::{
    combined_objective, glasso_column, lasso, proposed_group, GroupSpec, RegularizerKind,
    RegularizerResult,
};
pub mod sparse;
pub use sparse::{AlignedDenseMatrix, BlockSparseMatrix, MatVec, ScalarSparseMatrix};
pub mod model;
