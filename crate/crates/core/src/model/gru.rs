//! GRU cell with an explicit backward pass.
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! n  = tanh(W_h x + U_h (r * h) + b_h)
//! h' = (1 - z) * h + z * n
//! ```

use alloc::vec;
use alloc::vec::Vec;

use super::gaussian::sigmoid;
use super::GruParams;
use crate::error::{Error, Result};
use crate::linalg::{dot, gemv_t_acc, Vector};
use crate::real::Real;

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    pub x: Vec<T>,
    pub h: Vec<T>,
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    pub rh: Vec<T>,
    pub h_new: Vec<T>,
}

pub fn gru_forward<T: Real>(p: &GruParams<T>, x: &[T], h: &[T]) -> GruCache<T> {
    let hidden = p.hidden();
    let mut r = vec![T::zero(); hidden];
    let mut z = vec![T::zero(); hidden];
    for i in 0..hidden {
        r[i] = sigmoid(dot(p.w_r.row(i), x) + dot(p.u_r.row(i), h) + p.b_r[i]);
        z[i] = sigmoid(dot(p.w_z.row(i), x) + dot(p.u_z.row(i), h) + p.b_z[i]);
    }
    let rh: Vec<T> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
    let mut n = vec![T::zero(); hidden];
    let mut h_new = vec![T::zero(); hidden];
    for i in 0..hidden {
        n[i] = (dot(p.w_h.row(i), x) + dot(p.u_h.row(i), &rh) + p.b_h[i]).tanh();
        h_new[i] = (T::one() - z[i]) * h[i] + z[i] * n[i];
    }
    GruCache {
        x: x.to_vec(),
        h: h.to_vec(),
        r,
        z,
        n,
        rh,
        h_new,
    }
}

/// One GRU update with shape checks.
pub fn gru_cell<T: Real>(x: &Vector<T>, h: &Vector<T>, p: &GruParams<T>) -> Result<Vector<T>> {
    if x.len() != p.input() {
        return Err(Error::DimensionMismatch {
            op: "gru_cell input",
            expected: p.input(),
            actual: x.len(),
        });
    }
    if h.len() != p.hidden() {
        return Err(Error::DimensionMismatch {
            op: "gru_cell hidden",
            expected: p.hidden(),
            actual: h.len(),
        });
    }
    Ok(gru_forward(p, x, h).h_new.into())
}

/// Backpropagate `dh_new` through one cell. Parameter gradients accumulate
/// into `grads`, the input gradient accumulates into `dx`, and the gradient
/// with respect to the previous hidden state is written to `dh_prev`.
pub fn gru_backward<T: Real>(
    p: &GruParams<T>,
    c: &GruCache<T>,
    dh_new: &[T],
    grads: &mut GruParams<T>,
    dx: &mut [T],
    dh_prev: &mut [T],
) {
    let hidden = p.hidden();
    let one = T::one();
    let mut dn_pre = vec![T::zero(); hidden];
    let mut dz_pre = vec![T::zero(); hidden];
    for i in 0..hidden {
        let dh = dh_new[i];
        dh_prev[i] = dh * (one - c.z[i]);
        dn_pre[i] = dh * c.z[i] * (one - c.n[i] * c.n[i]);
        dz_pre[i] = dh * (c.n[i] - c.h[i]) * c.z[i] * (one - c.z[i]);
    }

    // Candidate path: d(r*h) = U_h^T dn_pre.
    let mut drh = vec![T::zero(); hidden];
    gemv_t_acc(&p.u_h, &dn_pre, &mut drh);
    let mut dr_pre = vec![T::zero(); hidden];
    for i in 0..hidden {
        dh_prev[i] = dh_prev[i] + drh[i] * c.r[i];
        dr_pre[i] = drh[i] * c.h[i] * c.r[i] * (one - c.r[i]);
    }

    grads.w_h.rank1_update(one, &dn_pre, &c.x);
    grads.u_h.rank1_update(one, &dn_pre, &c.rh);
    grads.w_z.rank1_update(one, &dz_pre, &c.x);
    grads.u_z.rank1_update(one, &dz_pre, &c.h);
    grads.w_r.rank1_update(one, &dr_pre, &c.x);
    grads.u_r.rank1_update(one, &dr_pre, &c.h);
    for i in 0..hidden {
        grads.b_h[i] = grads.b_h[i] + dn_pre[i];
        grads.b_z[i] = grads.b_z[i] + dz_pre[i];
        grads.b_r[i] = grads.b_r[i] + dr_pre[i];
    }

    gemv_t_acc(&p.u_z, &dz_pre, dh_prev);
    gemv_t_acc(&p.u_r, &dr_pre, dh_prev);
    gemv_t_acc(&p.w_h, &dn_pre, dx);
    gemv_t_acc(&p.w_z, &dz_pre, dx);
    gemv_t_acc(&p.w_r, &dr_pre, dx);
}
