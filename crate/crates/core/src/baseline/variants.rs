//! Attention ablation variants of the grouping module.

use rand::Rng;

use super::slot_attention::sa_attention_block;
use super::GroupingOutput;
use crate::error::Result;
use crate::model::{AttentionAxis, AttentionMap, LayerNorm, Linear, SlotSet};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Normalized inputs and slots plus separate k, q, v projections.
#[derive(Clone, Debug)]
struct Projections {
    norm_inputs: LayerNorm,
    norm_slots: LayerNorm,
    k: Linear,
    q: Linear,
    v: Linear,
}

impl Projections {
    fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, d: usize, eps: f64, rng: &mut R) -> Result<Self> {
        Ok(Projections {
            norm_inputs: LayerNorm::new(store, "grouping.norm_inputs", d, eps)?,
            norm_slots: LayerNorm::new(store, "grouping.norm_slots", d, eps)?,
            k: Linear::new(store, "grouping.k", d, d, false, rng)?,
            q: Linear::new(store, "grouping.q", d, d, false, rng)?,
            v: Linear::new(store, "grouping.v", d, d, false, rng)?,
        })
    }

    /// Returns `(keys, values, queries)`.
    fn apply<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        slots: Var,
    ) -> Result<(Var, Var, Var)> {
        let x = self.norm_inputs.forward(store, tape, inputs)?;
        let s = self.norm_slots.forward(store, tape, slots)?;
        let k = self.k.forward(store, tape, x)?;
        let v = self.v.forward(store, tape, x)?;
        let q = self.q.forward(store, tape, s)?;
        Ok((k, v, q))
    }
}

/// Scaled dot-product cross-attention: each slot takes a softmax over
/// pixels with temperature `√D`.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    proj: Projections,
}

impl CrossAttention {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, d: usize, eps: f64, rng: &mut R) -> Result<Self> {
        Ok(CrossAttention {
            proj: Projections::new(store, d, eps, rng)?,
        })
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        slots: Var,
    ) -> Result<GroupingOutput> {
        let (k, v, q) = self.proj.apply(store, tape, inputs, slots)?;
        let d = *tape.shape(k).last().expect("rank-3 keys");
        let logits = tape.bmm(q, k, false, true)?;
        let logits = tape.scale(logits, T::from_f64_lossy(1.0 / (d as f64).sqrt()))?;
        let attn = tape.softmax(logits, 2)?;
        let out = tape.bmm(attn, v, false, false)?;
        let weights = tape.permute(attn, &[0, 2, 1])?;
        Ok(GroupingOutput {
            slots: SlotSet { slots: out },
            attention: Some(AttentionMap {
                weights,
                axis: AttentionAxis::Pixels,
            }),
        })
    }
}

/// The Slot Attention attention block applied once, without GRU or MLP.
#[derive(Clone, Debug)]
pub struct SaAttention {
    proj: Projections,
    eps: f64,
}

impl SaAttention {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, d: usize, eps: f64, rng: &mut R) -> Result<Self> {
        Ok(SaAttention {
            proj: Projections::new(store, d, eps, rng)?,
            eps: 1e-8,
        })
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        slots: Var,
    ) -> Result<GroupingOutput> {
        let (k, v, q) = self.proj.apply(store, tape, inputs, slots)?;
        let block = sa_attention_block(tape, k, v, q, self.eps)?;
        Ok(GroupingOutput {
            slots: SlotSet { slots: block.updates },
            attention: Some(AttentionMap {
                weights: block.attn,
                axis: AttentionAxis::Slots,
            }),
        })
    }
}
