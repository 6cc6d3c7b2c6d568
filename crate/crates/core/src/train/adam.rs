//! Adam optimizer and learning-rate schedule.

use crate::error::{Result, SampError};
use crate::param::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Per-parameter moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore<f32>) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.tensor().numel()]).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }

    /// Bias-corrected Adam update from the gradients held in `store`.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<f32>, lr: f64) -> Result<()> {
        for (_, p) in store.iter() {
            if let Some(g) = p.tensor().grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(SampError::NonFiniteGradient {
                        name: p.name().to_string(),
                    });
                }
            }
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powf(self.t as f64);
        let bc2 = 1.0 - BETA2.powf(self.t as f64);
        let (b1, b2) = (BETA1 as f32, BETA2 as f32);
        let step_size = (lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let eps = EPS as f32;
        for (i, (_, p)) in store.iter_mut().enumerate() {
            let tensor = p.tensor_mut();
            let Some(g) = tensor.grad().map(<[f32]>::to_vec) else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &g), m), v) in tensor.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step_size * *m / ((*v * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of all gradients in the store.
pub fn grad_norm(store: &ParamStore<f32>) -> f64 {
    store
        .iter()
        .filter_map(|(_, p)| p.tensor().grad())
        .flatten()
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore<f32>, max_norm: f64) -> f64 {
    let norm = grad_norm(store);
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for (_, p) in store.iter_mut() {
            if let Some(g) = p.tensor_mut().grad_mut() {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    norm
}

/// `base_lr · min(1, step/warmup) · decay_rate^(step/decay_steps)`.
pub fn lr_at(step: usize, base_lr: f64, warmup_steps: usize, decay_rate: f64, decay_steps: usize) -> f64 {
    let warm = if warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / warmup_steps as f64).min(1.0)
    };
    let decay = if decay_steps == 0 {
        1.0
    } else {
        decay_rate.powf(step as f64 / decay_steps as f64)
    };
    base_lr * warm * decay
}
