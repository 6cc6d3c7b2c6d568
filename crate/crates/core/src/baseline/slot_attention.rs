//! Iterative Slot Attention with GRU update and residual MLP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GroupingOutput;
use crate::error::{Result, SampError};
use crate::model::{AttentionAxis, AttentionMap, LayerNorm, Linear, SlotSet};
use crate::param::{fan_in_uniform, ParamId, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Hyperparameters of the Slot Attention module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotAttentionConfig {
    /// Number of attention iterations `T`.
    pub iters: usize,
    pub n_slots: usize,
    pub slot_dim: usize,
    pub mlp_hidden: usize,
    /// Added to the per-slot attention mass before the weighted mean.
    pub eps: f64,
}

impl SlotAttentionConfig {
    pub fn new(n_slots: usize, slot_dim: usize) -> Self {
        SlotAttentionConfig {
            iters: 3,
            n_slots,
            slot_dim,
            mlp_hidden: 128,
            eps: 1e-8,
        }
    }
}

/// Intermediate values of one attention block.
#[derive(Clone, Copy, Debug)]
pub struct SaBlockOutput {
    /// Softmax over slots, `[B,P,n]`.
    pub attn: Var,
    /// Weighted-mean coefficients (columns sum to 1), `[B,P,n]`.
    pub weights: Var,
    /// `Wᵀ V`, `[B,n,D]`.
    pub updates: Var,
}

/// Attention block shared by the baseline and the `sa_attention` variant:
/// `M = K Qᵀ/√D`, softmax over slots, normalize each slot's column over
/// pixels, `updates = Wᵀ V`.
pub fn sa_attention_block<T: Real>(
    tape: &mut Tape<T>,
    keys: Var,
    values: Var,
    queries: Var,
    eps: f64,
) -> Result<SaBlockOutput> {
    let d = *tape.shape(keys).last().expect("rank-3 keys");
    let m = tape.bmm(keys, queries, false, true)?;
    let m = tape.scale(m, T::from_f64_lossy(1.0 / (d as f64).sqrt()))?;
    let attn = tape.softmax(m, 2)?;
    let mass = tape.sum_axis(attn, 1)?;
    let s = tape.shape(mass).to_vec();
    let mass = tape.reshape(mass, &[s[0], 1, s[1]])?;
    let denom = tape.add_scalar(mass, T::from_f64_lossy(eps))?;
    let weights = tape.div(attn, denom)?;
    let updates = tape.bmm(weights, values, true, false)?;
    Ok(SaBlockOutput { attn, weights, updates })
}

/// Gated recurrent unit over the last axis, standard gate equations.
#[derive(Clone, Debug)]
pub struct Gru {
    pub weight_ih: ParamId,
    pub weight_hh: ParamId,
    pub bias_ih: ParamId,
    pub bias_hh: ParamId,
    dim: usize,
}

impl Gru {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Gru {
            weight_ih: store.add(format!("{name}.weight_ih"), fan_in_uniform(&[3 * dim, dim], dim, rng))?,
            weight_hh: store.add(format!("{name}.weight_hh"), fan_in_uniform(&[3 * dim, dim], dim, rng))?,
            bias_ih: store.add(format!("{name}.bias_ih"), Tensor::zeros(vec![3 * dim]))?,
            bias_hh: store.add(format!("{name}.bias_hh"), Tensor::zeros(vec![3 * dim]))?,
            dim,
        })
    }

    /// `h' = (1-z)⊙n + z⊙h` with reset gate `r`, update gate `z` and
    /// candidate `n = tanh(W_in x + b_in + r⊙(W_hn h + b_hn))`.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, x: Var, h: Var) -> Result<Var> {
        let (wi, wh) = (tape.param(store, self.weight_ih), tape.param(store, self.weight_hh));
        let (bi, bh) = (tape.param(store, self.bias_ih), tape.param(store, self.bias_hh));
        let gi = tape.linear(x, wi, Some(bi))?;
        let gh = tape.linear(h, wh, Some(bh))?;
        let axis = tape.shape(x).len() - 1;
        let d = self.dim;
        let (ir, iz, inn) = (tape.slice(gi, axis, 0, d)?, tape.slice(gi, axis, d, d)?, tape.slice(gi, axis, 2 * d, d)?);
        let (hr, hz, hn) = (tape.slice(gh, axis, 0, d)?, tape.slice(gh, axis, d, d)?, tape.slice(gh, axis, 2 * d, d)?);
        let r = tape.add(ir, hr)?;
        let r = tape.sigmoid(r)?;
        let z = tape.add(iz, hz)?;
        let z = tape.sigmoid(z)?;
        let rn = tape.mul(r, hn)?;
        let n = tape.add(inn, rn)?;
        let n = tape.tanh(n)?;
        let one_minus_z = tape.one_minus(z)?;
        let a = tape.mul(one_minus_z, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }
}

/// The iterative Slot Attention module.
#[derive(Clone, Debug)]
pub struct SlotAttention {
    pub config: SlotAttentionConfig,
    pub norm_inputs: LayerNorm,
    pub norm_slots: LayerNorm,
    pub norm_mlp: LayerNorm,
    pub k: Linear,
    pub q: Linear,
    pub v: Linear,
    pub gru: Gru,
    pub mlp0: Linear,
    pub mlp1: Linear,
    /// Mean of the initial slot distribution.
    pub mu: ParamId,
    /// Unconstrained scale; the standard deviation is `softplus(sigma)`.
    pub sigma: ParamId,
}

impl SlotAttention {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        config: SlotAttentionConfig,
        ln_eps: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if config.iters == 0 {
            return Err(SampError::Config("slot attention needs at least one iteration".into()));
        }
        let d = config.slot_dim;
        Ok(SlotAttention {
            config,
            norm_inputs: LayerNorm::new(store, "grouping.norm_inputs", d, ln_eps)?,
            norm_slots: LayerNorm::new(store, "grouping.norm_slots", d, ln_eps)?,
            norm_mlp: LayerNorm::new(store, "grouping.norm_mlp", d, ln_eps)?,
            k: Linear::new(store, "grouping.k", d, d, false, rng)?,
            q: Linear::new(store, "grouping.q", d, d, false, rng)?,
            v: Linear::new(store, "grouping.v", d, d, false, rng)?,
            gru: Gru::new(store, "grouping.gru", d, rng)?,
            mlp0: Linear::new(store, "grouping.mlp0", d, config.mlp_hidden, true, rng)?,
            mlp1: Linear::new(store, "grouping.mlp1", config.mlp_hidden, d, true, rng)?,
            mu: store.add("grouping.mu", fan_in_uniform(&[d], d, rng))?,
            sigma: store.add("grouping.sigma", Tensor::zeros(vec![d]))?,
        })
    }

    /// Initial slots `mu + softplus(sigma) ⊙ noise` for `noise[B,n,D]`.
    pub fn init_slots<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, noise: Var) -> Result<Var> {
        let mu = tape.param(store, self.mu);
        let sigma = tape.param(store, self.sigma);
        let scale = tape.softplus(sigma)?;
        let spread = tape.mul(noise, scale)?;
        tape.add(spread, mu)
    }

    /// Runs `T` iterations on `inputs[B,P,D]` starting from `noise[B,n,D]`.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        noise: Var,
    ) -> Result<GroupingOutput> {
        let x = self.norm_inputs.forward(store, tape, inputs)?;
        let keys = self.k.forward(store, tape, x)?;
        let values = self.v.forward(store, tape, x)?;
        let mut slots = self.init_slots(store, tape, noise)?;
        let mut last = None;
        for _ in 0..self.config.iters {
            let prev = slots;
            let s = self.norm_slots.forward(store, tape, slots)?;
            let queries = self.q.forward(store, tape, s)?;
            let block = sa_attention_block(tape, keys, values, queries, self.config.eps)?;
            slots = self.gru.forward(store, tape, block.updates, prev)?;
            let h = self.norm_mlp.forward(store, tape, slots)?;
            let h = self.mlp0.forward(store, tape, h)?;
            let h = tape.relu(h)?;
            let h = self.mlp1.forward(store, tape, h)?;
            slots = tape.add(slots, h)?;
            last = Some(block.attn);
        }
        Ok(GroupingOutput {
            slots: SlotSet { slots },
            attention: last.map(|weights| AttentionMap {
                weights,
                axis: AttentionAxis::Slots,
            }),
        })
    }
}
