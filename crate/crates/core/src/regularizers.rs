//! Sparsity-inducing regularizers: element-wise Lasso, column-wise group Lasso
//! and the SIMD-size-aware group Lasso that treats every row as `cols / G`
//! contiguous runs of `G` weights.
//!
//! All three return the penalty value together with its (sub)gradient. At a
//! non-differentiable point (an exact zero weight or an all-zero group) the
//! gradient is zero, so weights removed by pruning are not pushed back out.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;

/// Group norms at or below this are treated as exactly zero.
pub const EPS_NORM: f64 = 1e-12;

/// Width of the contiguous weight runs used for regularization, pruning and the
/// block-sparse layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupSpec {
    group_size: usize,
}

impl GroupSpec {
    pub fn new(group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::ZeroGroupSize);
        }
        Ok(Self { group_size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.group_size
    }

    /// Number of groups per row, or an error if `cols` is not a multiple of G.
    pub fn groups_per_row(&self, cols: usize) -> Result<usize> {
        if !cols.is_multiple_of(self.group_size) {
            return Err(Error::Indivisible {
                cols,
                group_size: self.group_size,
            });
        }
        Ok(cols / self.group_size)
    }
}

impl Default for GroupSpec {
    fn default() -> Self {
        Self { group_size: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegularizerKind {
    #[default]
    None,
    Lasso,
    GroupLassoColumn,
    ProposedGroup(GroupSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerResult<T> {
    pub value: T,
    pub grad: Matrix<T>,
}

impl RegularizerKind {
    pub fn evaluate<T: Real>(&self, w: &Matrix<T>) -> Result<RegularizerResult<T>> {
        match self {
            RegularizerKind::None => Ok(RegularizerResult {
                value: T::zero(),
                grad: Matrix::zeros(w.rows(), w.cols()),
            }),
            RegularizerKind::Lasso => Ok(lasso(w)),
            RegularizerKind::GroupLassoColumn => Ok(glasso_column(w)),
            RegularizerKind::ProposedGroup(spec) => proposed_group(w, *spec),
        }
    }

    /// Penalty value only; skips materializing the gradient.
    pub fn value<T: Real>(&self, w: &Matrix<T>) -> Result<T> {
        match self {
            RegularizerKind::None => Ok(T::zero()),
            RegularizerKind::Lasso => Ok(w.as_slice().iter().map(|v| v.abs()).sum()),
            RegularizerKind::GroupLassoColumn => Ok((0..w.cols()).map(|j| l2(w.column(j))).sum()),
            RegularizerKind::ProposedGroup(spec) => {
                spec.groups_per_row(w.cols())?;
                Ok(w.as_slice()
                    .chunks_exact(spec.size())
                    .map(|g| l2(g.iter().copied()))
                    .sum())
            }
        }
    }

    /// Accumulate `scale * grad` into `out` and return the penalty value.
    pub fn accumulate_grad<T: Real>(
        &self,
        w: &Matrix<T>,
        scale: T,
        out: &mut Matrix<T>,
    ) -> Result<T> {
        if !w.same_shape(out) {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                left_rows: w.rows(),
                left_cols: w.cols(),
                right_rows: out.rows(),
                right_cols: out.cols(),
            });
        }
        if matches!(self, RegularizerKind::None) {
            return Ok(T::zero());
        }
        let r = self.evaluate(w)?;
        for (o, g) in out.as_mut_slice().iter_mut().zip(r.grad.as_slice()) {
            *o = *o + scale * *g;
        }
        Ok(r.value)
    }
}

#[inline]
fn l2<T: Real>(it: impl Iterator<Item = T>) -> T {
    it.map(|v| v * v).sum::<T>().sqrt()
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Sum of absolute values; gradient is the elementwise sign with `sign(0) = 0`.
pub fn lasso<T: Real>(w: &Matrix<T>) -> RegularizerResult<T> {
    let value = w.as_slice().iter().map(|v| v.abs()).sum();
    RegularizerResult {
        value,
        grad: w.map(sign),
    }
}

/// Sum over columns of the column L2 norm.
pub fn glasso_column<T: Real>(w: &Matrix<T>) -> RegularizerResult<T> {
    let eps = T::lit(EPS_NORM);
    let mut grad = Matrix::zeros(w.rows(), w.cols());
    let mut value = T::zero();
    for j in 0..w.cols() {
        let norm = l2(w.column(j));
        value = value + norm;
        if norm > eps {
            for i in 0..w.rows() {
                grad.set(i, j, w.get(i, j) / norm);
            }
        }
    }
    RegularizerResult { value, grad }
}

/// Sum over every `(row, group)` of the L2 norm of the `G` contiguous weights
/// in that group, i.e. the row-major matrix viewed as an `I x J/G x G` tensor.
pub fn proposed_group<T: Real>(w: &Matrix<T>, spec: GroupSpec) -> Result<RegularizerResult<T>> {
    spec.groups_per_row(w.cols())?;
    let eps = T::lit(EPS_NORM);
    let g = spec.size();
    let mut grad = Matrix::zeros(w.rows(), w.cols());
    let mut value = T::zero();
    // Row-major storage with cols % G == 0 means the groups tile the backing
    // slice exactly, so no row bookkeeping is needed.
    for (src, dst) in w
        .as_slice()
        .chunks_exact(g)
        .zip(grad.as_mut_slice().chunks_exact_mut(g))
    {
        let norm = l2(src.iter().copied());
        value = value + norm;
        if norm > eps {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s / norm;
            }
        }
    }
    Ok(RegularizerResult { value, grad })
}

/// Task loss plus the scaled penalty.
pub fn combined_objective(task_loss: f64, reg_value: f64, lambda: f64) -> f64 {
    task_loss + lambda * reg_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn lasso_examples() {
        let r = lasso(&m(&[&[1.0, -2.0], &[3.0, 0.0]]));
        assert_eq!(r.value, 6.0);
        assert_eq!(r.grad.as_slice(), &[1.0, -1.0, 1.0, 0.0]);

        let z = lasso(&Matrix::<f64>::zeros(3, 4));
        assert_eq!(z.value, 0.0);
        assert!(z.grad.as_slice().iter().all(|&g| g == 0.0));

        assert_eq!(lasso(&m(&[&[2.0]])).grad.as_slice(), &[1.0]);
    }

    #[test]
    fn glasso_examples() {
        let r = glasso_column(&m(&[&[3.0, 0.0], &[4.0, 0.0]]));
        assert_eq!(r.value, 5.0);
        assert_eq!(r.grad.as_slice(), &[0.6, 0.0, 0.8, 0.0]);

        assert_eq!(glasso_column(&Matrix::<f64>::identity(2)).value, 2.0);

        let z = glasso_column(&Matrix::<f64>::zeros(2, 3));
        assert_eq!(z.value, 0.0);
        assert!(z.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn proposed_examples() {
        let r = proposed_group(&m(&[&[3.0, 4.0, 0.0, 0.0]]), GroupSpec::new(2).unwrap()).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.grad.as_slice(), &[0.6, 0.8, 0.0, 0.0]);

        let z = proposed_group(&Matrix::<f64>::zeros(2, 8), GroupSpec::new(4).unwrap()).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn proposed_rejects_indivisible_columns() {
        let err =
            proposed_group(&Matrix::<f32>::zeros(2, 10), GroupSpec::new(4).unwrap()).unwrap_err();
        assert_eq!(
            err,
            Error::Indivisible {
                cols: 10,
                group_size: 4
            }
        );
        assert!(GroupSpec::new(0).is_err());
    }

    #[test]
    fn proposed_with_unit_groups_is_lasso() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::<f64>::from_fn(6, 10, |_, _| rng.random_range(-2.0..2.0));
        let a = lasso(&w);
        let b = proposed_group(&w, GroupSpec::new(1).unwrap()).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn proposed_with_full_rows_is_row_norm_sum() {
        let w = m(&[
            &[1.0, 2.0, 2.0, 0.0],
            &[0.0, 3.0, 0.0, 4.0],
            &[0.5, 0.5, 0.5, 0.5],
        ]);
        let r = proposed_group(&w, GroupSpec::new(4).unwrap()).unwrap();
        assert!((r.value - (3.0 + 5.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn combined_objective_examples() {
        assert!((combined_objective(1.0, 0.5, 1e-4) - 1.00005).abs() < 1e-15);
        assert_eq!(combined_objective(2.5, 7.0, 0.0), 2.5);
        assert_eq!(combined_objective(2.5, 0.0, 1e-4), 2.5);
    }

    #[test]
    fn value_only_path_matches_evaluate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let w = Matrix::<f64>::from_fn(8, 32, |_, _| rng.random_range(-1.0..1.0));
        for kind in [
            RegularizerKind::None,
            RegularizerKind::Lasso,
            RegularizerKind::GroupLassoColumn,
            RegularizerKind::ProposedGroup(GroupSpec::new(16).unwrap()),
        ] {
            let full = kind.evaluate(&w).unwrap().value;
            let fast = kind.value(&w).unwrap();
            assert!((full - fast).abs() <= 1e-12 * full.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_is_descent_direction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = Matrix::<f64>::from_fn(4, 8, |_, _| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        });
        for kind in [
            RegularizerKind::Lasso,
            RegularizerKind::GroupLassoColumn,
            RegularizerKind::ProposedGroup(GroupSpec::new(4).unwrap()),
        ] {
            let r = kind.evaluate(&w).unwrap();
            let stepped = Matrix::new(
                4,
                8,
                w.as_slice()
                    .iter()
                    .zip(r.grad.as_slice())
                    .map(|(a, g)| a - 1e-3 * g)
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            assert!(kind.value(&stepped).unwrap() < r.value, "{kind:?}");
        }
    }

    proptest! {
        #[test]
        fn penalties_are_positively_homogeneous(
            seed in any::<u64>(),
            c in -4.0f64..4.0,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = Matrix::<f64>::from_fn(5, 12, |_, _| rng.random_range(-1.0..1.0));
            let scaled = w.map(|v| c * v);
            for kind in [
                RegularizerKind::Lasso,
                RegularizerKind::GroupLassoColumn,
                RegularizerKind::ProposedGroup(GroupSpec::new(3).unwrap()),
                RegularizerKind::ProposedGroup(GroupSpec::new(12).unwrap()),
            ] {
                let base = kind.value(&w).unwrap();
                let got = kind.value(&scaled).unwrap();
                prop_assert!((got - c.abs() * base).abs() <= 1e-5 * (c.abs() * base).max(1e-12));
            }
        }

        #[test]
        fn grad_shape_and_value_sign(rows in 1usize..6, groups in 1usize..5, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = Matrix::<f32>::from_fn(rows, groups * 4, |_, _| rng.random_range(-1.0..1.0));
            for kind in [RegularizerKind::Lasso, RegularizerKind::GroupLassoColumn, RegularizerKind::ProposedGroup(GroupSpec::new(4).unwrap())] {
                let r = kind.evaluate(&w).unwrap();
                prop_assert!(r.value >= 0.0);
                prop_assert_eq!(r.grad.shape(), w.shape());
            }
        }
    }

    #[test]
    fn accumulate_grad_scales() {
        let w = m(&[&[3.0, 4.0, 0.0, 0.0]]);
        let mut out = Matrix::<f64>::zeros(1, 4);
        let kind = RegularizerKind::ProposedGroup(GroupSpec::new(2).unwrap());
        let v = kind.accumulate_grad(&w, 2.0, &mut out).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(out.as_slice(), &[1.2, 1.6, 0.0, 0.0]);
        let mut bad = Matrix::<f64>::zeros(2, 4);
        assert!(kind.accumulate_grad(&w, 1.0, &mut bad).is_err());
    }
}
