//! Generic (f32/f64) forward and backward passes of the decoder.

use alloc::vec;
use alloc::vec::Vec;

use super::data::SignalSequence;
use super::gaussian::{gaussian_nll, gaussian_nll_grad, raw_grad, GaussianHead};
use super::gru::{gru_backward, gru_forward, GruCache};
use super::DecoderParams;
use crate::error::{Error, Result};
use crate::linalg::{dot, gemv_t_acc};
use crate::real::Real;

/// Activations of one forward step.
#[derive(Debug, Clone)]
pub struct StepCache<T> {
    pub input: Vec<T>,
    pub a1: Vec<T>,
    pub gru: GruCache<T>,
    pub a2: Vec<T>,
    pub raw: Vec<Vec<T>>,
}

impl<T: Real> StepCache<T> {
    pub fn hidden(&self) -> &[T] {
        &self.gru.h_new
    }

    pub fn heads(&self, bands: usize) -> Vec<GaussianHead<T>> {
        self.raw
            .iter()
            .map(|r| GaussianHead::from_raw(r, bands))
            .collect()
    }
}

#[inline]
fn relu_affine<T: Real>(w: &crate::linalg::Matrix<T>, b: &[T], x: &[T]) -> Vec<T> {
    (0..w.rows())
        .map(|i| (dot(w.row(i), x) + b[i]).max(T::zero()))
        .collect()
}

pub fn forward_step<T: Real>(p: &DecoderParams<T>, h: &[T], input: Vec<T>) -> StepCache<T> {
    let a1 = relu_affine(&p.fc1.weight, &p.fc1.bias, &input);
    let gru = gru_forward(&p.gru, &a1, h);
    let a2 = relu_affine(&p.fc2.weight, &p.fc2.bias, &gru.h_new);
    let raw = p
        .heads
        .iter()
        .map(|head| {
            (0..head.weight.rows())
                .map(|i| dot(head.weight.row(i), &a2) + head.bias[i])
                .collect()
        })
        .collect();
    StepCache {
        input,
        a1,
        gru,
        a2,
        raw,
    }
}

fn step_input<T: Real>(prev: &[f32], cond: &[f32]) -> Vec<T> {
    prev.iter().chain(cond).map(|&v| T::lit(v as f64)).collect()
}

/// One decoder step: returns the `M` Gaussian heads and the new hidden state.
pub fn decoder_step<T: Real>(
    p: &DecoderParams<T>,
    h: &[T],
    prev: &[T],
    cond: &[T],
) -> Result<(Vec<GaussianHead<T>>, Vec<T>)> {
    let s = p.shape;
    for (op, expected, actual) in [
        ("decoder_step hidden", s.hidden, h.len()),
        ("decoder_step prev", s.prev_dim(), prev.len()),
        ("decoder_step cond", s.cond_dim, cond.len()),
    ] {
        if expected != actual {
            return Err(Error::DimensionMismatch {
                op,
                expected,
                actual,
            });
        }
    }
    let input: Vec<T> = prev.iter().chain(cond).copied().collect();
    let c = forward_step(p, h, input);
    Ok((c.heads(s.bands), c.gru.h_new))
}

fn check_sequence<T: Real>(p: &DecoderParams<T>, seq: &SignalSequence) -> Result<()> {
    let s = p.shape;
    for (op, expected, actual) in [
        ("sequence bands", s.bands, seq.bands),
        ("sequence multi", s.multi, seq.multi),
        ("sequence cond_dim", s.cond_dim, seq.cond_dim),
    ] {
        if expected != actual {
            return Err(Error::DimensionMismatch {
                op,
                expected,
                actual,
            });
        }
    }
    Ok(())
}

fn target<T: Real>(seq: &SignalSequence, k: usize, m: usize) -> Vec<T> {
    seq.target(k, m).iter().map(|&v| T::lit(v as f64)).collect()
}

/// Teacher-forced NLL summed over every `(step, head)` of a sequence, starting
/// from a zero hidden state. Returns `(sum, count)`.
pub fn sequence_nll<T: Real>(p: &DecoderParams<T>, seq: &SignalSequence) -> Result<(f64, usize)> {
    check_sequence(p, seq)?;
    let mut h = vec![T::zero(); p.shape.hidden];
    let mut sum = 0.0;
    for k in 0..seq.steps() {
        let c = forward_step(p, &h, step_input(seq.prev(k), seq.cond(k)));
        for (m, head) in c.heads(p.shape.bands).iter().enumerate() {
            sum += gaussian_nll(head, &target::<T>(seq, k, m))?.as_f64();
        }
        h = c.gru.h_new;
    }
    Ok((sum, seq.steps() * p.shape.multi))
}

/// Forward and full backpropagation through time over one sequence.
/// Gradients of `scale * sum NLL` accumulate into `grads`; returns the
/// unscaled NLL sum.
pub fn sequence_backward<T: Real>(
    p: &DecoderParams<T>,
    seq: &SignalSequence,
    scale: T,
    grads: &mut DecoderParams<T>,
) -> Result<f64> {
    check_sequence(p, seq)?;
    let s = p.shape;
    let steps = seq.steps();
    let mut caches = Vec::with_capacity(steps);
    let mut h = vec![T::zero(); s.hidden];
    for k in 0..steps {
        let c = forward_step(p, &h, step_input(seq.prev(k), seq.cond(k)));
        h.copy_from_slice(&c.gru.h_new);
        caches.push(c);
    }

    let mut sum = 0.0;
    let mut dh_next = vec![T::zero(); s.hidden];
    let mut dh_prev = vec![T::zero(); s.hidden];
    let mut draw = vec![T::zero(); s.head_dim()];
    for k in (0..steps).rev() {
        let c = &caches[k];
        let mut da2 = vec![T::zero(); s.fc2_units];
        for (m, raw) in c.raw.iter().enumerate() {
            let head = GaussianHead::from_raw(raw, s.bands);
            let g = gaussian_nll_grad(&head, &target::<T>(seq, k, m))?;
            sum += g.nll.as_f64();
            raw_grad(raw, s.bands, &g, &mut draw);
            draw.iter_mut().for_each(|v| *v = *v * scale);
            let gh = &mut grads.heads[m];
            gh.weight.rank1_update(T::one(), &draw, &c.a2);
            gh.bias
                .iter_mut()
                .zip(&draw)
                .for_each(|(b, d)| *b = *b + *d);
            gemv_t_acc(&p.heads[m].weight, &draw, &mut da2);
        }
        for (d, &a) in da2.iter_mut().zip(&c.a2) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        grads.fc2.weight.rank1_update(T::one(), &da2, &c.gru.h_new);
        grads
            .fc2
            .bias
            .iter_mut()
            .zip(&da2)
            .for_each(|(b, d)| *b = *b + *d);
        let mut dh = dh_next.clone();
        gemv_t_acc(&p.fc2.weight, &da2, &mut dh);

        let mut da1 = vec![T::zero(); s.fc1_units];
        gru_backward(&p.gru, &c.gru, &dh, &mut grads.gru, &mut da1, &mut dh_prev);
        for (d, &a) in da1.iter_mut().zip(&c.a1) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        grads.fc1.weight.rank1_update(T::one(), &da1, &c.input);
        grads
            .fc1
            .bias
            .iter_mut()
            .zip(&da1)
            .for_each(|(b, d)| *b = *b + *d);
        core::mem::swap(&mut dh_next, &mut dh_prev);
    }
    Ok(sum)
}
