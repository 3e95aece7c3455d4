//! Scalar abstraction shared by the dense kernels, regularizers and the decoder.
//!
//! Production storage is `f32`. The same code is instantiated at `f64` by the
//! finite-difference checks, where single precision is too coarse to resolve a
//! central difference with `h = 1e-3`.

use core::fmt::Debug;
use core::iter::Sum;

use num_traits::Float;

pub trait Real: Float + Sum + Default + Debug + Send + Sync + 'static {
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
