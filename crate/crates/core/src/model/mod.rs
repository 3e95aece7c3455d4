//! Desk-scale multi-sample subband GRU decoder.
//!
//! One forward step consumes the `M` most recent `B`-band sample vectors plus a
//! conditioning vector and emits `M` Gaussian heads, one per upcoming sample
//! vector:
//!
//! ```text
//! [prev (M*B) | cond (C)] -> FC1 -> ReLU -> GRU -> FC2 -> ReLU -> FC3_m -> (mean_m, L_m)
//! ```
//!
//! FC1, the six GRU gate matrices and FC2 are the pruned (and regularized)
//! matrices. The FC3 heads stay dense.

pub mod data;
pub mod decoder;
pub mod gaussian;
pub mod gru;
pub mod infer;
pub mod train;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::regularizers::GroupSpec;

pub use gaussian::{gaussian_nll, sample_head, GaussianHead, SampleGuard};

/// Layer widths of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DecoderShape {
    pub bands: usize,
    pub multi: usize,
    pub cond_dim: usize,
    pub fc1_units: usize,
    pub hidden: usize,
    pub fc2_units: usize,
}

impl Default for DecoderShape {
    fn default() -> Self {
        Self {
            bands: 2,
            multi: 2,
            cond_dim: 28,
            fc1_units: 64,
            hidden: 128,
            fc2_units: 64,
        }
    }
}

impl DecoderShape {
    #[inline]
    pub fn prev_dim(&self) -> usize {
        self.bands * self.multi
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.prev_dim() + self.cond_dim
    }

    #[inline]
    pub fn head_dim(&self) -> usize {
        gaussian::head_outputs(self.bands)
    }

    pub fn validate(&self, group: GroupSpec) -> Result<()> {
        let positive = [
            ("bands", self.bands),
            ("multi", self.multi),
            ("fc1_units", self.fc1_units),
            ("hidden", self.hidden),
            ("fc2_units", self.fc2_units),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig {
                    field,
                    reason: "must be at least 1".to_string(),
                });
            }
        }
        let divisible = [
            ("input width (bands*multi + cond_dim)", self.input_dim()),
            ("fc1_units", self.fc1_units),
            ("hidden", self.hidden),
        ];
        for (what, cols) in divisible {
            if cols % group.size() != 0 {
                return Err(Error::InvalidConfig {
                    field: "group_size",
                    reason: format!("{what} = {cols} is not divisible by {}", group.size()),
                });
            }
        }
        Ok(())
    }
}

/// Affine layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero bias.
    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Matrix::from_fn(out_dim, in_dim, |_, _| {
                T::lit(rng.random_range(-bound..bound))
            }),
            bias: vec![T::zero(); out_dim],
        }
    }

    fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// GRU gates: `W_*` act on the layer input, `U_*` on the hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_r: Matrix<T>,
    pub w_z: Matrix<T>,
    pub w_h: Matrix<T>,
    pub u_r: Matrix<T>,
    pub u_z: Matrix<T>,
    pub u_h: Matrix<T>,
    pub b_r: Vec<T>,
    pub b_z: Vec<T>,
    pub b_h: Vec<T>,
}

impl<T: Real> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_r: Matrix::zeros(hidden, input),
            w_z: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_r: Matrix::zeros(hidden, hidden),
            u_z: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_r: vec![T::zero(); hidden],
            b_z: vec![T::zero(); hidden],
            b_h: vec![T::zero(); hidden],
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut u = |rows, cols| {
            Matrix::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-bound..bound)))
        };
        Self {
            w_r: u(hidden, input),
            w_z: u(hidden, input),
            w_h: u(hidden, input),
            u_r: u(hidden, hidden),
            u_z: u(hidden, hidden),
            u_h: u(hidden, hidden),
            b_r: vec![T::zero(); hidden],
            b_z: vec![T::zero(); hidden],
            b_h: vec![T::zero(); hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_r.rows()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols()
    }
}

/// All trainable decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub shape: DecoderShape,
    pub fc1: Linear<T>,
    pub gru: GruParams<T>,
    pub fc2: Linear<T>,
    pub heads: Vec<Linear<T>>,
}

/// Names of the pruned matrices, in mask-store order.
pub const PRUNED_NAMES: [&str; 8] = [
    "fc1.weight",
    "gru.w_r",
    "gru.w_z",
    "gru.w_h",
    "gru.u_r",
    "gru.u_z",
    "gru.u_h",
    "fc2.weight",
];

impl<T: Real> DecoderParams<T> {
    pub fn zeros(shape: DecoderShape) -> Self {
        Self {
            shape,
            fc1: Linear::zeros(shape.fc1_units, shape.input_dim()),
            gru: GruParams::zeros(shape.fc1_units, shape.hidden),
            fc2: Linear::zeros(shape.fc2_units, shape.hidden),
            heads: (0..shape.multi)
                .map(|_| Linear::zeros(shape.head_dim(), shape.fc2_units))
                .collect(),
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: DecoderShape, rng: &mut R) -> Self {
        Self {
            shape,
            fc1: Linear::init(shape.fc1_units, shape.input_dim(), rng),
            gru: GruParams::init(shape.fc1_units, shape.hidden, rng),
            fc2: Linear::init(shape.fc2_units, shape.hidden, rng),
            heads: (0..shape.multi)
                .map(|_| Linear::init(shape.head_dim(), shape.fc2_units, rng))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> DecoderParams<U> {
        let g = &self.gru;
        DecoderParams {
            shape: self.shape,
            fc1: self.fc1.cast(),
            gru: GruParams {
                w_r: g.w_r.cast(),
                w_z: g.w_z.cast(),
                w_h: g.w_h.cast(),
                u_r: g.u_r.cast(),
                u_z: g.u_z.cast(),
                u_h: g.u_h.cast(),
                b_r: g.b_r.iter().map(|v| U::lit(v.as_f64())).collect(),
                b_z: g.b_z.iter().map(|v| U::lit(v.as_f64())).collect(),
                b_h: g.b_h.iter().map(|v| U::lit(v.as_f64())).collect(),
            },
            fc2: self.fc2.cast(),
            heads: self.heads.iter().map(Linear::cast).collect(),
        }
    }

    pub fn pruned(&self) -> [&Matrix<T>; 8] {
        let g = &self.gru;
        [
            &self.fc1.weight,
            &g.w_r,
            &g.w_z,
            &g.w_h,
            &g.u_r,
            &g.u_z,
            &g.u_h,
            &self.fc2.weight,
        ]
    }

    pub fn pruned_mut(&mut self) -> [&mut Matrix<T>; 8] {
        let g = &mut self.gru;
        [
            &mut self.fc1.weight,
            &mut g.w_r,
            &mut g.w_z,
            &mut g.w_h,
            &mut g.u_r,
            &mut g.u_z,
            &mut g.u_h,
            &mut self.fc2.weight,
        ]
    }

    /// Every tensor in canonical order: FC1, GRU matrices then biases, FC2,
    /// then the FC3 heads. Biases are reported as `1 x n`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "fc1.weight",
            "fc1.bias",
            "gru.w_r",
            "gru.w_z",
            "gru.w_h",
            "gru.u_r",
            "gru.u_z",
            "gru.u_h",
            "gru.b_r",
            "gru.b_z",
            "gru.b_h",
            "fc2.weight",
            "fc2.bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for m in 0..self.heads.len() {
            names.push(format!("fc3.{m}.weight"));
            names.push(format!("fc3.{m}.bias"));
        }
        names
    }

    /// `(rows, cols)` of every tensor, matching `tensor_names`.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let s = self.shape;
        let mut out = vec![
            self.fc1.weight.shape(),
            (1, s.fc1_units),
            self.gru.w_r.shape(),
            self.gru.w_z.shape(),
            self.gru.w_h.shape(),
            self.gru.u_r.shape(),
            self.gru.u_z.shape(),
            self.gru.u_h.shape(),
            (1, s.hidden),
            (1, s.hidden),
            (1, s.hidden),
            self.fc2.weight.shape(),
            (1, s.fc2_units),
        ];
        for h in &self.heads {
            out.push(h.weight.shape());
            out.push((1, h.bias.len()));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let g = &self.gru;
        let mut out: Vec<&[T]> = vec![
            self.fc1.weight.as_slice(),
            &self.fc1.bias,
            g.w_r.as_slice(),
            g.w_z.as_slice(),
            g.w_h.as_slice(),
            g.u_r.as_slice(),
            g.u_z.as_slice(),
            g.u_h.as_slice(),
            &g.b_r,
            &g.b_z,
            &g.b_h,
            self.fc2.weight.as_slice(),
            &self.fc2.bias,
        ];
        for h in &self.heads {
            out.push(h.weight.as_slice());
            out.push(&h.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let g = &mut self.gru;
        let mut out: Vec<&mut [T]> = vec![
            self.fc1.weight.as_mut_slice(),
            &mut self.fc1.bias,
            g.w_r.as_mut_slice(),
            g.w_z.as_mut_slice(),
            g.w_h.as_mut_slice(),
            g.u_r.as_mut_slice(),
            g.u_z.as_mut_slice(),
            g.u_h.as_mut_slice(),
            &mut g.b_r,
            &mut g.b_z,
            &mut g.b_h,
            self.fc2.weight.as_mut_slice(),
            &mut self.fc2.bias,
        ];
        for h in &mut self.heads {
            out.push(h.weight.as_mut_slice());
            out.push(&mut h.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rebuild from named tensors in `tensor_names` order.
    pub fn from_tensors(
        shape: DecoderShape,
        tensors: &[(&str, usize, usize, &[T])],
    ) -> Result<Self> {
        let mut p = Self::zeros(shape);
        let names = p.tensor_names();
        let shapes = p.tensor_shapes();
        if tensors.len() != names.len() {
            return Err(Error::DimensionMismatch {
                op: "DecoderParams::from_tensors",
                expected: names.len(),
                actual: tensors.len(),
            });
        }
        for (k, dst) in p.tensors_mut().into_iter().enumerate() {
            let (name, rows, cols, values) = tensors[k];
            if name != names[k] || (rows, cols) != shapes[k] || values.len() != dst.len() {
                return Err(Error::InvalidConfig {
                    field: "tensors",
                    reason: format!(
                        "expected {} {}x{}, found {name} {rows}x{cols} with {} values",
                        names[k],
                        shapes[k].0,
                        shapes[k].1,
                        values.len()
                    ),
                });
            }
            dst.copy_from_slice(values);
        }
        Ok(p)
    }
}
