//! Parameterized building blocks shared by all model parts.

use rand::Rng;

use crate::error::Result;
use crate::param::{fan_in_uniform, ParamId, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Convolution (or transposed convolution) with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
    pub transposed: bool,
    pub output_padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = store.add(
            format!("{name}.weight"),
            fan_in_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), fan_in_uniform(&[c_out], fan_in, rng))?;
        Ok(Conv {
            weight,
            bias,
            stride,
            pad,
            transposed: false,
            output_padding: 0,
        })
    }

    /// Transposed convolution; weight layout `[c_in, c_out, k, k]`.
    #[allow(clippy::too_many_arguments)]
    pub fn transposed<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel / (stride * stride).max(1);
        let weight = store.add(
            format!("{name}.weight"),
            fan_in_uniform(&[c_in, c_out, kernel, kernel], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), fan_in_uniform(&[c_out], fan_in, rng))?;
        Ok(Conv {
            weight,
            bias,
            stride,
            pad,
            transposed: true,
            output_padding,
        })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        if self.transposed {
            tape.conv_transpose2d(x, w, Some(b), self.stride, self.pad, self.output_padding)
        } else {
            tape.conv2d(x, w, Some(b), self.stride, self.pad)
        }
    }
}

/// Affine map `y = x Wᵀ + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), fan_in_uniform(&[d_out, d_in], d_in, rng))?;
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), fan_in_uniform(&[d_out], d_in, rng))?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.linear(x, w, b)
    }
}

/// Layer normalization over the last axis with learnable affine parameters.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, eps: f64) -> Result<Self> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(vec![dim], T::one()))?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![dim]))?;
        Ok(LayerNorm { gamma, beta, eps })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b, T::from_f64_lossy(self.eps))
    }
}
