//! Synthetic multi-band signals with a conditioning channel.
//!
//! Each band is a damped resonator (AR(2) with poles at `r e^{±iω}`, `ω` at
//! the band centre) driven by an excitation. Most of the excitation is
//! revealed, through a fixed random projection, in the conditioning vector of
//! the step that predicts it; the rest is unpredictable noise. A good
//! predictor therefore has to combine the previous samples with the
//! conditioning input, and a model that ignores either pays for it in NLL.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gaussian::{gaussian_nll, GaussianHead};
use super::DecoderShape;

const BURN_IN: usize = 256;
const RADIUS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DataConfig {
    pub train_sequences: usize,
    pub valid_sequences: usize,
    /// Forward steps per sequence; each step predicts `multi` sample vectors.
    pub segment_steps: usize,
    /// Stationary standard deviation of every band.
    pub signal_std: f64,
    /// Unpredictable share of the excitation, relative to the conditioned part.
    pub noise_ratio: f64,
    /// Additive noise on the conditioning features.
    pub cond_noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_sequences: 4096,
            valid_sequences: 128,
            segment_steps: 16,
            signal_std: 0.3,
            noise_ratio: 0.2,
            cond_noise: 0.05,
        }
    }
}

/// One teacher-forcing sequence. Holds `multi * (steps + 1)` sample vectors of
/// `bands` values; the first `multi` are context only.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence {
    pub bands: usize,
    pub multi: usize,
    pub cond_dim: usize,
    pub samples: Vec<f32>,
    pub cond: Vec<f32>,
}

impl SignalSequence {
    pub fn steps(&self) -> usize {
        self.cond
            .len()
            .checked_div(self.cond_dim)
            .unwrap_or_else(|| self.samples.len() / (self.bands * self.multi) - 1)
    }

    /// The `multi` sample vectors preceding step `k`, oldest first.
    pub fn prev(&self, k: usize) -> &[f32] {
        let w = self.bands * self.multi;
        &self.samples[k * w..(k + 1) * w]
    }

    pub fn cond(&self, k: usize) -> &[f32] {
        &self.cond[k * self.cond_dim..(k + 1) * self.cond_dim]
    }

    /// Target vector for head `m` at step `k`.
    pub fn target(&self, k: usize, m: usize) -> &[f32] {
        let start = ((k + 1) * self.multi + m) * self.bands;
        &self.samples[start..start + self.bands]
    }

    /// Every target vector in order.
    pub fn targets(&self) -> impl Iterator<Item = &[f32]> {
        self.samples[self.multi * self.bands..].chunks_exact(self.bands)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SignalSequence>,
    pub valid: Vec<SignalSequence>,
}

/// Generator for the synthetic task. The projection from excitation to
/// conditioning features is drawn once per task seed.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    shape: DecoderShape,
    cfg: DataConfig,
    ar: Vec<(f64, f64)>,
    drive: Vec<f64>,
    projection: Vec<f64>,
}

/// `var(x) / var(u)` for `x_t = a1 x_{t-1} + a2 x_{t-2} + u_t`.
fn ar2_gain(a1: f64, a2: f64) -> f64 {
    (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1))
}

impl SyntheticTask {
    pub fn new(shape: DecoderShape, cfg: DataConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
        let bands = shape.bands;
        let ar: Vec<(f64, f64)> = (0..bands)
            .map(|b| {
                let omega = PI * (2 * b + 1) as f64 / (2 * bands) as f64;
                (2.0 * RADIUS * omega.cos(), -RADIUS * RADIUS)
            })
            .collect();
        let drive = ar
            .iter()
            .map(|&(a1, a2)| {
                cfg.signal_std
                    / (ar2_gain(a1, a2) * (1.0 + cfg.noise_ratio * cfg.noise_ratio)).sqrt()
            })
            .collect();
        let latent = shape.multi * bands;
        let scale = 1.0 / (latent as f64).sqrt();
        let projection = (0..shape.cond_dim * latent)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Self {
            shape,
            cfg,
            ar,
            drive,
            projection,
        }
    }

    pub fn shape(&self) -> DecoderShape {
        self.shape
    }

    /// Generate one sequence with `steps` forward steps.
    pub fn sequence<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> SignalSequence {
        let (bands, multi, cdim) = (self.shape.bands, self.shape.multi, self.shape.cond_dim);
        let n = multi * (steps + 1);
        let mut x1 = vec![0.0f64; bands];
        let mut x2 = vec![0.0f64; bands];
        let mut excitation = vec![0.0f64; n * bands];
        let mut samples = vec![0.0f32; n * bands];
        for t in 0..BURN_IN + n {
            for b in 0..bands {
                let e: f64 = rng.sample(StandardNormal);
                let noise: f64 = rng.sample(StandardNormal);
                let (a1, a2) = self.ar[b];
                let x =
                    a1 * x1[b] + a2 * x2[b] + self.drive[b] * (e + self.cfg.noise_ratio * noise);
                x2[b] = x1[b];
                x1[b] = x;
                if t >= BURN_IN {
                    excitation[(t - BURN_IN) * bands + b] = e;
                    samples[(t - BURN_IN) * bands + b] = x as f32;
                }
            }
        }
        let latent = multi * bands;
        let mut cond = vec![0.0f32; steps * cdim];
        for k in 0..steps {
            let e = &excitation[(k + 1) * latent..(k + 2) * latent];
            for c in 0..cdim {
                let row = &self.projection[c * latent..(c + 1) * latent];
                let v: f64 = row.iter().zip(e).map(|(p, q)| p * q).sum();
                let noise: f64 = rng.sample(StandardNormal);
                cond[k * cdim + c] = (v + self.cfg.cond_noise * noise) as f32;
            }
        }
        SignalSequence {
            bands,
            multi,
            cond_dim: cdim,
            samples,
            cond,
        }
    }

    pub fn dataset(&self, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = self.cfg.segment_steps;
        let train = (0..self.cfg.train_sequences)
            .map(|_| self.sequence(steps, &mut rng))
            .collect();
        let valid = (0..self.cfg.valid_sequences)
            .map(|_| self.sequence(steps, &mut rng))
            .collect();
        Dataset { train, valid }
    }
}

/// Fit one Gaussian (mean and full covariance) to every training target and
/// return its mean NLL per validation target vector.
pub fn global_gaussian_baseline(data: &Dataset) -> f64 {
    let bands = data.train[0].bands;
    let mut n = 0usize;
    let mut mean = vec![0.0f64; bands];
    for t in data.train.iter().flat_map(|s| s.targets()) {
        for b in 0..bands {
            mean[b] += t[b] as f64;
        }
        n += 1;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0f64; bands * bands];
    for t in data.train.iter().flat_map(|s| s.targets()) {
        for i in 0..bands {
            for j in 0..bands {
                cov[i * bands + j] += (t[i] as f64 - mean[i]) * (t[j] as f64 - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    let mut chol = vec![0.0f64; bands * bands];
    for i in 0..bands {
        for j in 0..=i {
            let s: f64 = cov[i * bands + j]
                - (0..j)
                    .map(|k| chol[i * bands + k] * chol[j * bands + k])
                    .sum::<f64>();
            chol[i * bands + j] = if i == j {
                s.sqrt()
            } else {
                s / chol[j * bands + j]
            };
        }
    }
    let head = GaussianHead { mean, chol };
    let mut total = 0.0;
    let mut count = 0usize;
    for t in data.valid.iter().flat_map(|s| s.targets()) {
        let x: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        total += gaussian_nll(&head, &x).expect("covariance of a non-degenerate signal");
        count += 1;
    }
    total / count as f64
}
