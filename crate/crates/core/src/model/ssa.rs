//! Simplified Slot Attention: one softmax over the slot axis, shared
//! key/value projection, no iteration, GRU or MLP.

use rand::Rng;

use super::layers::{LayerNorm, Linear};
use super::{AttentionAxis, AttentionMap, SlotSet};
use crate::error::{Result, SampError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// `M = K Qᵀ / tau`, `W = softmax over slots`, `S = Wᵀ K`.
///
/// `keys[B,P,D]`, `queries[B,n,D]`; returns `W[B,P,n]` and `S[B,n,D]`.
pub fn ssa_attention_core<T: Real>(tape: &mut Tape<T>, keys: Var, queries: Var, tau: f64) -> Result<(AttentionMap, SlotSet)> {
    let qs = tape.shape(queries);
    if qs.len() != 3 || qs[1] == 0 {
        return Err(SampError::InvalidArgument("SSA needs at least one slot".into()));
    }
    if !(tau > 0.0) {
        return Err(SampError::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let m = tape.bmm(keys, queries, false, true)?;
    let m = tape.scale(m, T::from_f64_lossy(1.0 / tau))?;
    let w = tape.softmax(m, 2)?;
    let slots = tape.bmm(w, keys, true, false)?;
    Ok((
        AttentionMap {
            weights: w,
            axis: AttentionAxis::Slots,
        },
        SlotSet { slots },
    ))
}

/// Intermediate values of one SSA evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SsaOutput {
    pub keys: Var,
    pub values: Var,
    pub queries: Var,
    pub attention: AttentionMap,
    pub slots: SlotSet,
}

/// Parameters of the SSA layer.
#[derive(Clone, Debug)]
pub struct SsaLayer {
    pub norm_inputs: LayerNorm,
    pub norm_slots: LayerNorm,
    pub k: Linear,
    pub q: Linear,
    pub tau: f64,
}

impl SsaLayer {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        dim: usize,
        tau: f64,
        eps: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(SsaLayer {
            norm_inputs: LayerNorm::new(store, "grouping.norm_inputs", dim, eps)?,
            norm_slots: LayerNorm::new(store, "grouping.norm_slots", dim, eps)?,
            k: Linear::new(store, "grouping.k", dim, dim, false, rng)?,
            q: Linear::new(store, "grouping.q", dim, dim, false, rng)?,
            tau,
        })
    }

    /// `inputs[B,P,D]`, `slot_priors[B,n,D]`.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        slot_priors: Var,
    ) -> Result<SsaOutput> {
        let x = self.norm_inputs.forward(store, tape, inputs)?;
        let s = self.norm_slots.forward(store, tape, slot_priors)?;
        let keys = self.k.forward(store, tape, x)?;
        let queries = self.q.forward(store, tape, s)?;
        let (attention, slots) = ssa_attention_core(tape, keys, queries, self.tau)?;
        Ok(SsaOutput {
            keys,
            values: keys,
            queries,
            attention,
            slots,
        })
    }
}
