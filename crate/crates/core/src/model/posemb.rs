//! Four-ramp positional embedding with a learnable projection.

use rand::Rng;

use super::layers::Linear;
use crate::error::{Result, SampError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Base grid `[H, W, 4]` with channels `[x/(W-1), y/(H-1), 1-x/(W-1), 1-y/(H-1)]`.
/// A ramp along an axis of extent 1 is defined as 0 (so its complement is 1).
pub fn base_grid<T: Real>(h: usize, w: usize) -> Result<Tensor<T>> {
    if h == 0 || w == 0 {
        return Err(SampError::InvalidArgument(format!("positional grid {h}x{w}")));
    }
    let ramp = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let mut data = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let (rx, ry) = (ramp(x, w), ramp(y, h));
            data.extend([rx, ry, 1.0 - rx, 1.0 - ry].map(T::from_f64_lossy));
        }
    }
    Tensor::new(vec![h, w, 4], data)
}

/// Learnable projection of the base grid to the feature width.
#[derive(Clone, Debug)]
pub struct PositionalEmbedding {
    pub proj: Linear,
}

impl PositionalEmbedding {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let proj = Linear::new(store, name, 4, dim, true, rng)?;
        if let Some(bias) = proj.bias {
            store.get_mut(bias).tensor_mut().data_mut().fill(T::zero());
        }
        Ok(PositionalEmbedding { proj })
    }

    /// Projected embedding `[H, W, D]`.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, h: usize, w: usize) -> Result<Var> {
        let grid = tape.input(base_grid(h, w)?);
        self.proj.forward(store, tape, grid)
    }
}
