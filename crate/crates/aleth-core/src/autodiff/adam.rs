//! Adam with bias correction.

use super::scalar::Scalar;
use crate::error::{AlethError, Result};

/// Optimizer state: one first/second moment buffer per parameter tensor,
/// aligned with the entry order handed to [`adam_step`].
#[derive(Clone, Debug)]
pub struct AdamState<S: Scalar> {
    pub beta1: S,
    pub beta2: S,
    pub eps_adam: S,
    pub step_count: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        Self::with_hyperparams(S::from_f64(0.9), S::from_f64(0.999), S::from_f64(1e-8))
    }

    pub fn with_hyperparams(beta1: S, beta2: S, eps_adam: S) -> Self {
        AdamState { beta1, beta2, eps_adam, step_count: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl<S: Scalar> Default for AdamState<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// One named parameter/gradient pair for an optimizer step.
pub struct AdamEntry<'a, S: Scalar> {
    pub name: &'a str,
    pub values: &'a mut [S],
    pub grad: &'a [S],
}

/// Standard Adam update with bias correction. Moment buffers are sized on
/// the first call; later calls must present the same parameter list.
pub fn adam_step<S: Scalar>(state: &mut AdamState<S>, lr: S, entries: &mut [AdamEntry<'_, S>]) -> Result<()> {
    if lr <= S::zero() {
        return Err(AlethError::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
    }
    if state.m.is_empty() {
        state.m = entries.iter().map(|e| vec![S::zero(); e.values.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != entries.len() {
        return Err(AlethError::ShapeMismatch(format!(
            "optimizer tracks {} parameters, step received {}",
            state.m.len(),
            entries.len()
        )));
    }
    for (entry, m) in entries.iter().zip(state.m.iter()) {
        if entry.values.len() != entry.grad.len() {
            return Err(AlethError::ShapeMismatch(format!(
                "parameter '{}' has {} values but {} gradient entries",
                entry.name,
                entry.values.len(),
                entry.grad.len()
            )));
        }
        if entry.values.len() != m.len() {
            return Err(AlethError::ShapeMismatch(format!(
                "parameter '{}' changed size since the optimizer was initialised",
                entry.name
            )));
        }
        if entry.grad.iter().any(|g| g.is_nan()) {
            return Err(AlethError::NonFinite(format!("NaN gradient for parameter '{}'", entry.name)));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let one = S::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    for (i, entry) in entries.iter_mut().enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..entry.values.len() {
            let g = entry.grad[j];
            m[j] = state.beta1 * m[j] + (one - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (one - state.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            entry.values[j] = entry.values[j] - lr * m_hat / (v_hat.sqrt() + state.eps_adam);
        }
    }
    Ok(())
}
