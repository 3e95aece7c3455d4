//! Single-precision inference engine shared by the dense-masked and the
//! block-sparse execution paths. All buffers are allocated up front so the
//! decode loop itself does not allocate.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::gaussian::{sample_head_into, sigmoid, GaussianHead, SampleGuard};
use super::{DecoderParams, DecoderShape};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::pruning::{masked, MaskStore};
use crate::regularizers::GroupSpec;
use crate::sparse::{AlignedDenseMatrix, BlockSparseMatrix, MatVec};

#[derive(Debug, Clone)]
pub struct InferenceDecoder<M> {
    shape: DecoderShape,
    fc1: M,
    fc1_b: Vec<f32>,
    /// `[r, z, h]` input-side and hidden-side gate matrices.
    w: [M; 3],
    u: [M; 3],
    b: [Vec<f32>; 3],
    fc2: M,
    fc2_b: Vec<f32>,
    heads: Vec<(DenseMatrix, Vec<f32>)>,
    hidden: Vec<f32>,
    input: Vec<f32>,
    a1: Vec<f32>,
    gates: [Vec<f32>; 3],
    tmp: Vec<f32>,
    rh: Vec<f32>,
    a2: Vec<f32>,
    raw: Vec<Vec<f32>>,
}

impl<M: MatVec> InferenceDecoder<M> {
    fn build(
        params: &DecoderParams<f32>,
        mut convert: impl FnMut(usize, &DenseMatrix) -> Result<M>,
    ) -> Result<Self> {
        let s = params.shape;
        let g = &params.gru;
        Ok(Self {
            shape: s,
            fc1: convert(0, &params.fc1.weight)?,
            fc1_b: params.fc1.bias.clone(),
            w: [
                convert(1, &g.w_r)?,
                convert(2, &g.w_z)?,
                convert(3, &g.w_h)?,
            ],
            u: [
                convert(4, &g.u_r)?,
                convert(5, &g.u_z)?,
                convert(6, &g.u_h)?,
            ],
            b: [g.b_r.clone(), g.b_z.clone(), g.b_h.clone()],
            fc2: convert(7, &params.fc2.weight)?,
            fc2_b: params.fc2.bias.clone(),
            heads: params
                .heads
                .iter()
                .map(|h| (h.weight.clone(), h.bias.clone()))
                .collect(),
            hidden: vec![0.0; s.hidden],
            input: vec![0.0; s.input_dim()],
            a1: vec![0.0; s.fc1_units],
            gates: [
                vec![0.0; s.hidden],
                vec![0.0; s.hidden],
                vec![0.0; s.hidden],
            ],
            tmp: vec![0.0; s.hidden],
            rh: vec![0.0; s.hidden],
            a2: vec![0.0; s.fc2_units],
            raw: vec![vec![0.0; s.head_dim()]; s.multi],
        })
    }

    pub fn shape(&self) -> DecoderShape {
        self.shape
    }

    pub fn hidden(&self) -> &[f32] {
        &self.hidden
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn set_hidden(&mut self, h: &[f32]) {
        self.hidden.copy_from_slice(h);
    }

    /// Advance one step; the raw head outputs are then available via `raw`.
    pub fn step(&mut self, prev: &[f32], cond: &[f32]) {
        let pd = self.shape.prev_dim();
        self.input[..pd].copy_from_slice(prev);
        self.input[pd..].copy_from_slice(cond);

        self.fc1.gemv_into(&self.input, &mut self.a1);
        for (a, b) in self.a1.iter_mut().zip(&self.fc1_b) {
            *a = (*a + b).max(0.0);
        }

        for k in 0..2 {
            self.w[k].gemv_into(&self.a1, &mut self.gates[k]);
            self.u[k].gemv_into(&self.hidden, &mut self.tmp);
            for ((g, t), b) in self.gates[k].iter_mut().zip(&self.tmp).zip(&self.b[k]) {
                *g = sigmoid(*g + t + b);
            }
        }
        for ((rh, r), h) in self.rh.iter_mut().zip(&self.gates[0]).zip(&self.hidden) {
            *rh = r * h;
        }
        self.w[2].gemv_into(&self.a1, &mut self.gates[2]);
        self.u[2].gemv_into(&self.rh, &mut self.tmp);
        for i in 0..self.shape.hidden {
            let n = (self.gates[2][i] + self.tmp[i] + self.b[2][i]).tanh();
            let z = self.gates[1][i];
            self.hidden[i] = (1.0 - z) * self.hidden[i] + z * n;
        }

        self.fc2.gemv_into(&self.hidden, &mut self.a2);
        for (a, b) in self.a2.iter_mut().zip(&self.fc2_b) {
            *a = (*a + b).max(0.0);
        }
        for ((w, b), out) in self.heads.iter().zip(self.raw.iter_mut()) {
            w.gemv_into(&self.a2, out);
            for (o, bb) in out.iter_mut().zip(b) {
                *o += bb;
            }
        }
    }

    pub fn raw(&self) -> &[Vec<f32>] {
        &self.raw
    }

    pub fn heads(&self) -> Vec<GaussianHead<f32>> {
        self.raw
            .iter()
            .map(|r| GaussianHead::from_raw(r, self.shape.bands))
            .collect()
    }

    /// Autoregressive generation over `cond.len() / cond_dim` steps, feeding
    /// each step's samples back as the next step's context. Returns all
    /// generated sample vectors, flattened.
    pub fn generate<R: Rng + ?Sized>(
        &mut self,
        init_prev: &[f32],
        cond: &[f32],
        rng: &mut R,
        guard: &SampleGuard,
    ) -> Result<Vec<f32>> {
        let s = self.shape;
        if init_prev.len() != s.prev_dim() {
            return Err(Error::DimensionMismatch {
                op: "generate prev",
                expected: s.prev_dim(),
                actual: init_prev.len(),
            });
        }
        if s.cond_dim == 0 || !cond.len().is_multiple_of(s.cond_dim) {
            return Err(Error::DimensionMismatch {
                op: "generate cond",
                expected: s.cond_dim,
                actual: cond.len(),
            });
        }
        let steps = cond.len() / s.cond_dim;
        let mut out = vec![0.0f32; steps * s.prev_dim()];
        let mut prev = init_prev.to_vec();
        for k in 0..steps {
            self.step(&prev, &cond[k * s.cond_dim..(k + 1) * s.cond_dim]);
            for m in 0..s.multi {
                let head = GaussianHead::from_raw(&self.raw[m], s.bands);
                sample_head_into(&head, rng, guard, &mut prev[m * s.bands..(m + 1) * s.bands]);
            }
            out[k * s.prev_dim()..(k + 1) * s.prev_dim()].copy_from_slice(&prev);
        }
        Ok(out)
    }
}

impl InferenceDecoder<AlignedDenseMatrix> {
    /// Dense path: pruned matrices are masked copies in cache-line aligned
    /// rows, so it shares memory layout and lane kernel with the sparse path.
    pub fn dense(params: &DecoderParams<f32>, masks: &MaskStore) -> Result<Self> {
        Self::build(params, |k, w| {
            Ok(AlignedDenseMatrix::from_dense(&masked(
                w,
                &masks.masks()[k],
            )?))
        })
    }
}

impl InferenceDecoder<BlockSparseMatrix> {
    /// Block-sparse path: pruned matrices are packed into `G`-wide blocks.
    pub fn block_sparse(
        params: &DecoderParams<f32>,
        masks: &MaskStore,
        spec: GroupSpec,
    ) -> Result<Self> {
        Self::build(params, |k, w| {
            BlockSparseMatrix::from_masked_dense(w, &masks.masks()[k], spec)
        })
    }
}
