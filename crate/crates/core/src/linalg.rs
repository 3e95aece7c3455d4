//! Dense row-major matrices and vectors plus the handful of level-1/level-2
//! kernels needed by training, pruning and as the reference for sparse gemv.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::real::Real;

/// Accumulator lanes used by the dense dot product. Sixteen `f32` lanes fill
/// two 256-bit registers, which matches the block width used for pruning.
pub const LANES: usize = 16;

/// Dense row-major matrix. Element `(i, j)` lives at `i * cols + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

pub type DenseMatrix = Matrix<f32>;

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn same_shape<U>(&self, other: &Matrix<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self += alpha * u * v^T`.
    pub fn rank1_update(&mut self, alpha: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let s = alpha * ui;
            if s == T::zero() {
                continue;
            }
            axpy_slice(s, v, self.row_mut(i));
        }
    }
}

/// Dense vector of reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T> {
    values: Vec<T>,
}

pub type DenseVector = Vector<f32>;

impl<T: Real> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::zero(); len],
        }
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(values: Vec<T>) -> Self {
        Self { values }
    }
}

impl<T: Clone> From<&[T]> for Vector<T> {
    fn from(values: &[T]) -> Self {
        Self {
            values: values.to_vec(),
        }
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.values
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

/// Lane-accumulated dot product. The fixed-width inner loop is written so the
/// compiler can keep the accumulators in vector registers.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; LANES] = x.try_into().unwrap();
        let y: &[T; LANES] = y.try_into().unwrap();
        for k in 0..LANES {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    reduce_lanes(&acc) + tail
}

/// Pairwise horizontal sum of a lane accumulator.
#[inline]
pub fn reduce_lanes<T: Real, const N: usize>(acc: &[T; N]) -> T {
    let mut buf = *acc;
    let mut width = N;
    while width > 1 {
        let half = width / 2;
        for k in 0..half {
            buf[k] = buf[k] + buf[k + half];
        }
        if width % 2 == 1 {
            buf[0] = buf[0] + buf[width - 1];
        }
        width = half;
    }
    if N == 0 {
        T::zero()
    } else {
        buf[0]
    }
}

/// `y += alpha * x` on raw slices.
#[inline]
pub fn axpy_slice<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `y = A x` without allocation. Slice lengths are the caller's contract.
#[inline]
pub fn gemv_into<T: Real>(a: &Matrix<T>, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), a.cols);
    debug_assert_eq!(y.len(), a.rows);
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(a.row(i), x);
    }
}

/// `y += A^T x` without allocation.
#[inline]
pub fn gemv_t_acc<T: Real>(a: &Matrix<T>, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), a.rows);
    debug_assert_eq!(y.len(), a.cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi != T::zero() {
            axpy_slice(xi, a.row(i), y);
        }
    }
}

/// Matrix-vector product `A x`.
pub fn gemv<T: Real>(a: &Matrix<T>, x: &Vector<T>) -> Result<Vector<T>> {
    if x.len() != a.cols {
        return Err(Error::DimensionMismatch {
            op: "gemv",
            expected: a.cols,
            actual: x.len(),
        });
    }
    let mut y = Vector::zeros(a.rows);
    gemv_into(a, x, &mut y);
    Ok(y)
}

/// `alpha * x + y`, returned as a new vector.
pub fn saxpy<T: Real>(alpha: T, x: &Vector<T>, y: &Vector<T>) -> Result<Vector<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "saxpy",
            expected: y.len(),
            actual: x.len(),
        });
    }
    let mut out = y.clone();
    axpy_slice(alpha, x, &mut out);
    Ok(out)
}
