//! Multivariate Gaussian heads parameterized by a Cholesky factor.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::real::Real;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower bound added after the softplus on the Cholesky diagonal.
pub const DIAG_FLOOR: f64 = 1e-4;

/// Mean vector and lower-triangular Cholesky factor (row-major `B x B`,
/// strictly-upper part zero).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead<T> {
    pub mean: Vec<T>,
    pub chol: Vec<T>,
}

/// Number of raw head outputs for `bands`: the mean plus the lower triangle.
pub const fn head_outputs(bands: usize) -> usize {
    bands + bands * (bands + 1) / 2
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

#[inline]
pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> GaussianHead<T> {
    /// Decode a raw linear-layer output: `[mean (B), lower triangle row by row]`
    /// with the diagonal passed through `softplus(x) + DIAG_FLOOR`.
    pub fn from_raw(raw: &[T], bands: usize) -> Self {
        debug_assert_eq!(raw.len(), head_outputs(bands));
        let mean = raw[..bands].to_vec();
        let tri = &raw[bands..];
        let mut chol = vec![T::zero(); bands * bands];
        for i in 0..bands {
            for j in 0..i {
                chol[i * bands + j] = tri[tri_index(i, j)];
            }
            chol[i * bands + i] = softplus(tri[tri_index(i, i)]) + T::lit(DIAG_FLOOR);
        }
        Self { mean, chol }
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> T {
        self.chol[i * self.bands() + j]
    }

    fn check_diagonal(&self) -> Result<()> {
        for k in 0..self.bands() {
            let d = self.l(k, k);
            if d.is_nan() || d <= T::zero() {
                return Err(Error::NonPositiveDiagonal {
                    index: k,
                    value: d.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// `z = L^{-1} (x - mean)` by forward substitution.
    fn whiten(&self, x: &[T]) -> Vec<T> {
        let b = self.bands();
        let mut z = vec![T::zero(); b];
        for i in 0..b {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s = s - self.l(i, j) * z[j];
            }
            z[i] = s / self.l(i, i);
        }
        z
    }
}

/// `-ln N(x; mean, L L^T)`.
pub fn gaussian_nll<T: Real>(head: &GaussianHead<T>, x: &[T]) -> Result<T> {
    head.check_diagonal()?;
    let z = head.whiten(x);
    let quad: T = z.iter().map(|&v| v * v).sum();
    let logdet: T = (0..head.bands()).map(|k| head.l(k, k).ln()).sum();
    Ok(T::lit(0.5) * quad + logdet + T::lit(0.5 * head.bands() as f64 * LN_2PI))
}

/// NLL together with its gradients with respect to the mean and the
/// (lower-triangular) Cholesky factor.
pub struct NllGrad<T> {
    pub nll: T,
    pub d_mean: Vec<T>,
    pub d_chol: Vec<T>,
}

pub fn gaussian_nll_grad<T: Real>(head: &GaussianHead<T>, x: &[T]) -> Result<NllGrad<T>> {
    let nll = gaussian_nll(head, x)?;
    let b = head.bands();
    let z = head.whiten(x);
    // w = L^{-T} z by back substitution.
    let mut w = vec![T::zero(); b];
    for i in (0..b).rev() {
        let mut s = z[i];
        for j in i + 1..b {
            s = s - head.l(j, i) * w[j];
        }
        w[i] = s / head.l(i, i);
    }
    let d_mean = w.iter().map(|&v| -v).collect();
    let mut d_chol = vec![T::zero(); b * b];
    for i in 0..b {
        for j in 0..=i {
            d_chol[i * b + j] = -w[i] * z[j];
        }
        d_chol[i * b + i] = d_chol[i * b + i] + T::one() / head.l(i, i);
    }
    Ok(NllGrad {
        nll,
        d_mean,
        d_chol,
    })
}

/// Chain the head gradient back to the raw head outputs.
pub fn raw_grad<T: Real>(raw: &[T], bands: usize, g: &NllGrad<T>, out: &mut [T]) {
    out[..bands].copy_from_slice(&g.d_mean);
    let tri = &raw[bands..];
    let dtri = &mut out[bands..];
    for i in 0..bands {
        for j in 0..i {
            dtri[tri_index(i, j)] = g.d_chol[i * bands + j];
        }
        let k = tri_index(i, i);
        dtri[k] = g.d_chol[i * bands + i] * sigmoid(tri[k]);
    }
}

/// Variance and amplitude guards used when sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleGuard {
    pub sigma_min: f32,
    pub sigma_max: f32,
    pub clip_min: f32,
    pub clip_max: f32,
}

impl Default for SampleGuard {
    fn default() -> Self {
        Self {
            sigma_min: 1e-4,
            sigma_max: 1.0,
            clip_min: -1.0,
            clip_max: 1.0,
        }
    }
}

/// Reparameterized draw `clamp(mean + L eps)` with the diagonal of `L` first
/// clamped to `[sigma_min, sigma_max]`. Writes into `out`.
pub fn sample_head_into<R: Rng + ?Sized>(
    head: &GaussianHead<f32>,
    rng: &mut R,
    guard: &SampleGuard,
    out: &mut [f32],
) {
    let b = head.bands();
    let mut eps = [0.0f32; 8];
    let mut eps_vec;
    let eps: &mut [f32] = if b <= eps.len() {
        &mut eps[..b]
    } else {
        eps_vec = vec![0.0f32; b];
        &mut eps_vec
    };
    for e in eps.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
    for i in 0..b {
        let mut v = head.mean[i];
        for j in 0..i {
            v += head.l(i, j) * eps[j];
        }
        v += head.l(i, i).clamp(guard.sigma_min, guard.sigma_max) * eps[i];
        out[i] = v.clamp(guard.clip_min, guard.clip_max);
    }
}

pub fn sample_head<R: Rng + ?Sized>(
    head: &GaussianHead<f32>,
    rng: &mut R,
    guard: &SampleGuard,
) -> Vec<f32> {
    let mut out = vec![0.0; head.bands()];
    sample_head_into(head, rng, guard, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn head(mean: &[f64], chol: &[f64]) -> GaussianHead<f64> {
        GaussianHead {
            mean: mean.to_vec(),
            chol: chol.to_vec(),
        }
    }

    #[test]
    fn closed_form_values() {
        let std_normal = head(&[0.0], &[1.0]);
        assert!(
            (gaussian_nll(&std_normal, &[0.0]).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-12
        );

        let h = head(&[0.3, -0.2], &[1.0, 0.0, 0.0, 1.0]);
        assert!((gaussian_nll(&h, &[0.3, -0.2]).unwrap() - 1.837_877_066_409_345_5).abs() < 1e-12);

        let l = [0.7, 0.0, -0.4, 1.3];
        let base = gaussian_nll(&head(&[0.1, 0.2], &l), &[0.1, 0.2]).unwrap();
        let doubled = gaussian_nll(&head(&[0.1, 0.2], &l.map(|v| 2.0 * v)), &[0.1, 0.2]).unwrap();
        assert!((doubled - base - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_diagonal() {
        let h = head(&[0.0, 0.0], &[1.0, 0.0, 0.5, 0.0]);
        assert!(matches!(
            gaussian_nll(&h, &[0.0, 0.0]),
            Err(Error::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    /// Direct evaluation with an explicit covariance inverse and determinant.
    fn explicit_nll_2d(mean: [f64; 2], l: [f64; 4], x: [f64; 2]) -> f64 {
        let s00 = l[0] * l[0];
        let s01 = l[0] * l[2];
        let s11 = l[2] * l[2] + l[3] * l[3];
        let det = s00 * s11 - s01 * s01;
        let (i00, i01, i11) = (s11 / det, -s01 / det, s00 / det);
        let (e0, e1) = (x[0] - mean[0], x[1] - mean[1]);
        let quad = e0 * e0 * i00 + 2.0 * e0 * e1 * i01 + e1 * e1 * i11;
        0.5 * quad + 0.5 * det.ln() + LN_2PI
    }

    #[test]
    fn cholesky_route_matches_explicit_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mean = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let l = [
                rng.random_range(0.05..2.0),
                0.0,
                rng.random_range(-1.0..1.0),
                rng.random_range(0.05..2.0),
            ];
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = gaussian_nll(&head(&mean, &l), &x).unwrap();
            let b = explicit_nll_2d(mean, l, x);
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for bands in 1..=3 {
            let n = head_outputs(bands);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..bands).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = GaussianHead::from_raw(&raw, bands);
            let g = gaussian_nll_grad(&h, &x).unwrap();
            let mut d = vec![0.0; n];
            raw_grad(&raw, bands, &g, &mut d);
            for k in 0..n {
                let f = |delta: f64| {
                    let mut r = raw.clone();
                    r[k] += delta;
                    gaussian_nll(&GaussianHead::from_raw(&r, bands), &x).unwrap()
                };
                let fd = (f(1e-5) - f(-1e-5)) / 2e-5;
                assert!(
                    (fd - d[k]).abs() < 1e-6 * fd.abs().max(1.0),
                    "bands={bands} k={k}: {fd} vs {}",
                    d[k]
                );
            }
        }
    }

    #[test]
    fn vanishing_variance_returns_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = GaussianHead {
            mean: vec![0.25f32, -0.5],
            chol: vec![1e-9, 0.0, 0.0, 1e-9],
        };
        let s = sample_head(&h, &mut rng, &SampleGuard::default());
        assert!((s[0] - 0.25).abs() < 1e-3 && (s[1] + 0.5).abs() < 1e-3);

        let loud = GaussianHead {
            mean: vec![3.0f32],
            chol: vec![50.0],
        };
        for _ in 0..100 {
            let v = sample_head(&loud, &mut rng, &SampleGuard::default())[0];
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let h = GaussianHead {
            mean: vec![0.0f32, 0.1],
            chol: vec![0.3, 0.0, 0.1, 0.2],
        };
        let a = sample_head(
            &h,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(42),
            &SampleGuard::default(),
        );
        let b = sample_head(
            &h,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(42),
            &SampleGuard::default(),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let h = GaussianHead {
            mean: vec![0.0f32],
            chol: vec![0.5],
        };
        let guard = SampleGuard {
            clip_min: -100.0,
            clip_max: 100.0,
            ..SampleGuard::default()
        };
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_head(&h, &mut rng, &guard)[0] as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * 0.5 / 100.0, "mean {mean}");
        assert!((var.sqrt() - 0.5).abs() < 0.05 * 0.5, "std {}", var.sqrt());
    }
}
