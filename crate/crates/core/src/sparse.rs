//! Block-sparse (fixed-width block CSR) and scalar CSR matrices with their
//! matrix-vector kernels.
//!
//! A block is a run of `G` consecutive columns of one row. Blocks are stored
//! back to back in row-then-block order in a single 64-byte aligned buffer,
//! so with `G = 16` every block starts on a cache line and the kernel streams
//! the values linearly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dot, reduce_lanes, DenseMatrix, DenseVector};
use crate::pruning::PruneMask;
use crate::regularizers::GroupSpec;

/// Matrix-vector product on plain slices, shared by the dense and sparse
/// formats so inference code can be written once.
pub trait MatVec {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`; slice lengths are the caller's contract.
    fn gemv_into(&self, x: &[f32], y: &mut [f32]);
}

impl MatVec for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }
    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }
    fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        crate::linalg::gemv_into(self, x, y)
    }
}

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct CacheLine([f32; 16]);

/// Growable `f32` buffer whose start is 64-byte aligned.
#[derive(Clone, Default)]
struct AlignedBuf {
    lines: Vec<CacheLine>,
    len: usize,
}

impl AlignedBuf {
    fn push_slice(&mut self, src: &[f32]) {
        let new_len = self.len + src.len();
        let need = new_len.div_ceil(16);
        if need > self.lines.len() {
            self.lines.resize(need, CacheLine([0.0; 16]));
        }
        let start = self.len;
        self.len = new_len;
        self.as_mut_slice()[start..].copy_from_slice(src);
    }

    fn as_slice(&self) -> &[f32] {
        // SAFETY: `CacheLine` is `repr(C)` over `[f32; 16]`, so the vector's
        // storage is `16 * lines.len()` contiguous, initialized `f32`s and
        // `len <= 16 * lines.len()`.
        unsafe { core::slice::from_raw_parts(self.lines.as_ptr().cast::<f32>(), self.len) }
    }

    fn as_mut_slice(&mut self) -> &mut [f32] {
        // SAFETY: as in `as_slice`, with exclusive access through `&mut self`.
        unsafe { core::slice::from_raw_parts_mut(self.lines.as_mut_ptr().cast::<f32>(), self.len) }
    }
}

impl PartialEq for AlignedBuf {
    fn eq(&self, other: &Self) -> bool {
        self.as_slice() == other.as_slice()
    }
}

impl fmt::Debug for AlignedBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Block-CSR matrix with a fixed block width.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    rows: usize,
    cols: usize,
    block_width: usize,
    row_offsets: Vec<usize>,
    block_col_indices: Vec<u32>,
    block_values: AlignedBuf,
}

impl BlockSparseMatrix {
    /// Pack the kept, not-all-zero groups of `w` under a group-constant mask.
    pub fn from_masked_dense(w: &DenseMatrix, mask: &PruneMask, spec: GroupSpec) -> Result<Self> {
        if w.rows() != mask.rows() || w.cols() != mask.cols() {
            return Err(Error::ShapeMismatch {
                op: "from_masked_dense",
                left_rows: w.rows(),
                left_cols: w.cols(),
                right_rows: mask.rows(),
                right_cols: mask.cols(),
            });
        }
        let per_row = spec.groups_per_row(w.cols())?;
        if let Some((row, group)) = mask.first_mixed_group(spec)? {
            return Err(Error::MaskNotGroupConstant {
                group_size: spec.size(),
                row,
                group,
            });
        }
        let g = spec.size();
        let mut row_offsets = Vec::with_capacity(w.rows() + 1);
        let mut block_col_indices = Vec::new();
        let mut block_values = AlignedBuf::default();
        row_offsets.push(0);
        for i in 0..w.rows() {
            let row = w.row(i);
            for b in 0..per_row {
                let vals = &row[b * g..(b + 1) * g];
                if mask.get(i, b * g) && vals.iter().any(|&v| v != 0.0) {
                    block_col_indices.push(b as u32);
                    block_values.push_slice(vals);
                }
            }
            row_offsets.push(block_col_indices.len());
        }
        Ok(Self {
            rows: w.rows(),
            cols: w.cols(),
            block_width: g,
            row_offsets,
            block_col_indices,
            block_values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_width(&self) -> usize {
        self.block_width
    }

    pub fn n_blocks(&self) -> usize {
        self.block_col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn block_col_indices(&self) -> &[u32] {
        &self.block_col_indices
    }

    pub fn block_values(&self) -> &[f32] {
        self.block_values.as_slice()
    }

    /// Fraction of the dense matrix covered by stored blocks.
    pub fn density(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            return 0.0;
        }
        (self.n_blocks() * self.block_width) as f64 / total as f64
    }

    /// Scatter the stored blocks back into a dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let g = self.block_width;
        let values = self.block_values();
        for i in 0..self.rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let c = self.block_col_indices[k] as usize * g;
                out.row_mut(i)[c..c + g].copy_from_slice(&values[k * g..(k + 1) * g]);
            }
        }
        out
    }

    pub fn gemv(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "bsr_gemv",
                expected: self.cols,
                actual: x.len(),
            });
        }
        let mut y = DenseVector::zeros(self.rows);
        self.gemv_into(x, &mut y);
        Ok(y)
    }

    fn kernel<const G: usize>(&self, x: &[f32], y: &mut [f32]) {
        let values = self.block_values();
        for (i, yi) in y.iter_mut().enumerate() {
            let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = [0.0f32; G];
            for k in start..end {
                let c = self.block_col_indices[k] as usize * G;
                let v: &[f32; G] = values[k * G..(k + 1) * G].try_into().unwrap();
                let xb: &[f32; G] = x[c..c + G].try_into().unwrap();
                for l in 0..G {
                    acc[l] += v[l] * xb[l];
                }
            }
            *yi = reduce_lanes(&acc);
        }
    }

    fn kernel_any(&self, x: &[f32], y: &mut [f32]) {
        let g = self.block_width;
        let values = self.block_values();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut sum = 0.0f32;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let c = self.block_col_indices[k] as usize * g;
                sum += dot(&values[k * g..(k + 1) * g], &x[c..c + g]);
            }
            *yi = sum;
        }
    }
}

impl MatVec for BlockSparseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        match self.block_width {
            16 => self.kernel::<16>(x, y),
            8 => self.kernel::<8>(x, y),
            4 => self.kernel::<4>(x, y),
            32 => self.kernel::<32>(x, y),
            _ => self.kernel_any(x, y),
        }
    }
}

/// Dense row-major matrix with every row padded to a multiple of 16 floats
/// and starting on a cache line. Uses the same lane kernel as the 16-wide
/// block-sparse path, so the two differ only in which blocks they visit.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDenseMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    values: AlignedBuf,
}

impl AlignedDenseMatrix {
    pub fn from_dense(w: &DenseMatrix) -> Self {
        let stride = w.cols().div_ceil(16) * 16;
        let mut values = AlignedBuf::default();
        let pad = vec![0.0f32; stride - w.cols()];
        for i in 0..w.rows() {
            values.push_slice(w.row(i));
            values.push_slice(&pad);
        }
        Self {
            rows: w.rows(),
            cols: w.cols(),
            stride,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.values.as_slice()[i * self.stride + j]
        })
    }
}

impl MatVec for AlignedDenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        let values = self.values.as_slice();
        let full = self.cols / 16 * 16;
        for (row, yi) in values.chunks_exact(self.stride).zip(y.iter_mut()) {
            let mut acc = [0.0f32; 16];
            for (v, xb) in row[..full].chunks_exact(16).zip(x[..full].chunks_exact(16)) {
                let v: &[f32; 16] = v.try_into().unwrap();
                let xb: &[f32; 16] = xb.try_into().unwrap();
                for l in 0..16 {
                    acc[l] += v[l] * xb[l];
                }
            }
            let tail: f32 = row[full..self.cols]
                .iter()
                .zip(&x[full..])
                .map(|(a, b)| a * b)
                .sum();
            *yi = reduce_lanes(&acc) + tail;
        }
    }
}

/// Scalar compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f32>,
}

impl ScalarSparseMatrix {
    /// Keep every element whose mask bit is set and whose value is non-zero.
    pub fn from_masked_dense(w: &DenseMatrix, mask: &PruneMask) -> Result<Self> {
        if w.rows() != mask.rows() || w.cols() != mask.cols() {
            return Err(Error::ShapeMismatch {
                op: "csr_from_masked_dense",
                left_rows: w.rows(),
                left_cols: w.cols(),
                right_rows: mask.rows(),
                right_cols: mask.cols(),
            });
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..w.rows() {
            for (j, &v) in w.row(i).iter().enumerate() {
                if mask.get(i, j) && v != 0.0 {
                    col_indices.push(j as u32);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Ok(Self {
            rows: w.rows(),
            cols: w.cols(),
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.set(i, self.col_indices[k] as usize, self.values[k]);
            }
        }
        out
    }

    pub fn gemv(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "csr_gemv",
                expected: self.cols,
                actual: x.len(),
            });
        }
        let mut y = DenseVector::zeros(self.rows);
        self.gemv_into(x, &mut y);
        Ok(y)
    }
}

impl MatVec for ScalarSparseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut sum = 0.0f32;
            for (&c, &v) in self.col_indices[start..end]
                .iter()
                .zip(&self.values[start..end])
            {
                sum += v * x[c as usize];
            }
            *yi = sum;
        }
    }
}

pub fn from_masked_dense(
    w: &DenseMatrix,
    mask: &PruneMask,
    spec: GroupSpec,
) -> Result<BlockSparseMatrix> {
    BlockSparseMatrix::from_masked_dense(w, mask, spec)
}

pub fn bsr_gemv(b: &BlockSparseMatrix, x: &DenseVector) -> Result<DenseVector> {
    b.gemv(x)
}

pub fn csr_from_masked_dense(w: &DenseMatrix, mask: &PruneMask) -> Result<ScalarSparseMatrix> {
    ScalarSparseMatrix::from_masked_dense(w, mask)
}

pub fn csr_gemv(s: &ScalarSparseMatrix, x: &DenseVector) -> Result<DenseVector> {
    s.gemv(x)
}

pub fn density(b: &BlockSparseMatrix) -> f64 {
    b.density()
}
