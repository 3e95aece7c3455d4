//! Gradual group-magnitude pruning.
//!
//! Sparsity follows a cubic ramp from 0 at `ramp_start` to `1 - target_density`
//! at `ramp_start + ramp_length`. Masks are computed over contiguous runs of G
//! weights within a row, so every mask is constant on each run.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::regularizers::GroupSpec;

/// Slack used when turning `sparsity * n_groups` into a group count, so that a
/// product such as `0.7 * 100` that lands a few ulps under an integer still
/// rounds down to that integer.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PruneSchedule {
    pub target_density: f64,
    pub ramp_start: u64,
    pub ramp_length: u64,
    pub recompute_interval: u64,
}

impl PruneSchedule {
    pub fn new(
        target_density: f64,
        ramp_start: u64,
        ramp_length: u64,
        recompute_interval: u64,
    ) -> Result<Self> {
        let s = Self {
            target_density,
            ramp_start,
            ramp_length,
            recompute_interval,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        use alloc::string::ToString;
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "target_density",
                reason: "must lie in (0, 1]".to_string(),
            });
        }
        if self.ramp_length == 0 {
            return Err(Error::InvalidConfig {
                field: "ramp_length",
                reason: "must be at least 1".to_string(),
            });
        }
        if self.recompute_interval == 0 {
            return Err(Error::InvalidConfig {
                field: "recompute_interval",
                reason: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn ramp_end(&self) -> u64 {
        self.ramp_start + self.ramp_length
    }

    /// Final sparsity, `1 - d`.
    #[inline]
    pub fn final_sparsity(&self) -> f64 {
        1.0 - self.target_density
    }

    /// Scheduled sparsity at step `s`.
    pub fn sparsity_at_step(&self, s: u64) -> f64 {
        if s <= self.ramp_start {
            return 0.0;
        }
        if s >= self.ramp_end() {
            return self.final_sparsity();
        }
        let progress = (s - self.ramp_start) as f64 / self.ramp_length as f64;
        let remaining = 1.0 - progress;
        self.final_sparsity() * (1.0 - remaining * remaining * remaining)
    }

    /// Whether masks are recomputed at step `s`. The last ramp step always
    /// recomputes so the final sparsity is reached even when the ramp end is
    /// not a multiple of the interval.
    pub fn recomputes_at(&self, s: u64) -> bool {
        s > self.ramp_start
            && s <= self.ramp_end()
            && (s.is_multiple_of(self.recompute_interval) || s == self.ramp_end())
    }
}

/// Binary keep (`true`) / drop (`false`) mask over a matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl PruneMask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "PruneMask::from_bits",
                expected: rows * cols,
                actual: bits.len(),
            });
        }
        Ok(Self { rows, cols, bits })
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
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, keep: bool) {
        self.bits[i * self.cols + j] = keep;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of dropped elements.
    pub fn element_sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        1.0 - self.kept() as f64 / self.bits.len() as f64
    }

    /// First `(row, group)` whose bits are not all equal, if any.
    pub fn first_mixed_group(&self, spec: GroupSpec) -> Result<Option<(usize, usize)>> {
        let g = spec.size();
        spec.groups_per_row(self.cols)?;
        for (idx, chunk) in self.bits.chunks_exact(g).enumerate() {
            if chunk.iter().any(|&b| b != chunk[0]) {
                let per_row = self.cols / g;
                return Ok(Some((idx / per_row, idx % per_row)));
            }
        }
        Ok(None)
    }

    pub fn is_group_constant(&self, spec: GroupSpec) -> bool {
        matches!(self.first_mixed_group(spec), Ok(None))
    }

    /// Number of groups whose first bit is dropped. Meaningful for
    /// group-constant masks.
    pub fn zero_groups(&self, spec: GroupSpec) -> usize {
        self.bits
            .chunks_exact(spec.size())
            .filter(|c| !c[0])
            .count()
    }

    pub fn group_count(&self, spec: GroupSpec) -> usize {
        self.bits.len() / spec.size()
    }

    pub fn group_sparsity(&self, spec: GroupSpec) -> f64 {
        let n = self.group_count(spec);
        if n == 0 {
            return 0.0;
        }
        self.zero_groups(spec) as f64 / n as f64
    }
}

/// L2 norm of every `(row, group)` run, in row-major group order.
pub fn group_norms<T: Real>(w: &Matrix<T>, spec: GroupSpec) -> Result<Vec<f64>> {
    spec.groups_per_row(w.cols())?;
    Ok(w.as_slice()
        .chunks_exact(spec.size())
        .map(|g| {
            g.iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Number of groups removed when `n_groups` groups are pruned at `sparsity`.
pub fn groups_to_prune(sparsity: f64, n_groups: usize) -> usize {
    let k = (sparsity.clamp(0.0, 1.0) * n_groups as f64 + COUNT_SLACK).floor() as usize;
    k.min(n_groups)
}

/// Drop the `floor(sparsity * n_groups)` groups with the smallest L2 norm.
/// Ties are broken by ascending `(row, group)` index.
pub fn compute_group_mask<T: Real>(
    w: &Matrix<T>,
    spec: GroupSpec,
    sparsity: f64,
) -> Result<PruneMask> {
    let norms = group_norms(w, spec)?;
    let k = groups_to_prune(sparsity, norms.len());
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut mask = PruneMask::ones(w.rows(), w.cols());
    let g = spec.size();
    for &idx in &order[..k] {
        mask.bits[idx * g..(idx + 1) * g]
            .iter_mut()
            .for_each(|b| *b = false);
    }
    Ok(mask)
}

/// Zero every dropped weight in place.
pub fn apply_mask<T: Real>(w: &mut Matrix<T>, mask: &PruneMask) -> Result<()> {
    if w.rows() != mask.rows || w.cols() != mask.cols {
        return Err(Error::ShapeMismatch {
            op: "apply_mask",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_rows: mask.rows,
            right_cols: mask.cols,
        });
    }
    for (v, &keep) in w.as_mut_slice().iter_mut().zip(&mask.bits) {
        if !keep {
            *v = T::zero();
        }
    }
    Ok(())
}

/// Masked copy of `w`.
pub fn masked<T: Real>(w: &Matrix<T>, mask: &PruneMask) -> Result<Matrix<T>> {
    let mut out = w.clone();
    apply_mask(&mut out, mask)?;
    Ok(out)
}

/// One mask per managed matrix, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStore {
    masks: Vec<PruneMask>,
}

impl MaskStore {
    pub fn all_ones(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            masks: shapes
                .into_iter()
                .map(|(r, c)| PruneMask::ones(r, c))
                .collect(),
        }
    }

    pub fn from_masks(masks: Vec<PruneMask>) -> Self {
        Self { masks }
    }

    pub fn masks(&self) -> &[PruneMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Pruned groups over all managed matrices divided by the total group count.
    pub fn group_sparsity(&self, spec: GroupSpec) -> f64 {
        let (zero, total) = self.masks.iter().fold((0usize, 0usize), |(z, t), m| {
            (z + m.zero_groups(spec), t + m.group_count(spec))
        });
        if total == 0 {
            0.0
        } else {
            zero as f64 / total as f64
        }
    }

    pub fn apply<T: Real>(&self, weights: &mut [&mut Matrix<T>]) -> Result<()> {
        if weights.len() != self.masks.len() {
            return Err(Error::DimensionMismatch {
                op: "MaskStore::apply",
                expected: self.masks.len(),
                actual: weights.len(),
            });
        }
        for (w, m) in weights.iter_mut().zip(&self.masks) {
            apply_mask(w, m)?;
        }
        Ok(())
    }
}

/// Advance pruning to step `s`: recompute masks on ramp boundaries from the
/// current weight magnitudes, then mask every managed matrix. After the ramp
/// the masks are frozen. Returns whether the masks were recomputed.
pub fn pruning_step<T: Real>(
    store: &mut MaskStore,
    weights: &mut [&mut Matrix<T>],
    sched: &PruneSchedule,
    spec: GroupSpec,
    s: u64,
) -> Result<bool> {
    let recompute = sched.recomputes_at(s);
    if recompute {
        if weights.len() != store.masks.len() {
            return Err(Error::DimensionMismatch {
                op: "pruning_step",
                expected: store.masks.len(),
                actual: weights.len(),
            });
        }
        let sparsity = sched.sparsity_at_step(s);
        for (w, m) in weights.iter().zip(store.masks.iter_mut()) {
            *m = compute_group_mask(w, spec, sparsity)?;
        }
    }
    store.apply(weights)?;
    Ok(recompute)
}
