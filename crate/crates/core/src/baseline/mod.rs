//! Grouping modules that can replace SSA: the iterative Slot Attention
//! baseline and the attention ablation variants, plus a timing harness.

mod bench;
mod slot_attention;
mod variants;

pub use bench::{bench_grouping, linear_fit, BenchReport, BenchRow, BenchSize, LinearFit};
pub use slot_attention::{sa_attention_block, Gru, SaBlockOutput, SlotAttention, SlotAttentionConfig};
pub use variants::{CrossAttention, SaAttention};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SampError};
use crate::model::{AttentionMap, SampConfig, SlotSet, SsaLayer};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Which grouping module sits between encoder and decoder.
///
/// The first four are the SAMP attention ablations and consume the primitive
/// slots of the competition encoder. `SlotAttention` is the iterative
/// baseline, which samples its initial slots instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Ssa,
    None,
    CrossAttention,
    SaAttention,
    SlotAttention,
}

impl VariantKind {
    /// The four configurations of the attention ablation.
    pub const ABLATION: [VariantKind; 4] = [
        VariantKind::Ssa,
        VariantKind::None,
        VariantKind::CrossAttention,
        VariantKind::SaAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Ssa => "ssa",
            VariantKind::None => "none",
            VariantKind::CrossAttention => "cross_attention",
            VariantKind::SaAttention => "sa_attention",
            VariantKind::SlotAttention => "slot_attention",
        }
    }

    /// Parses a variant name; accepts `cross` and `sa-attn` style aliases.
    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "ssa" | "samp" => VariantKind::Ssa,
            "none" => VariantKind::None,
            "cross" | "cross_attention" | "cross_attn" => VariantKind::CrossAttention,
            "sa_attention" | "sa_attn" => VariantKind::SaAttention,
            "slot_attention" | "sa" => VariantKind::SlotAttention,
            _ => return Err(SampError::Config(format!("unknown variant `{s}`"))),
        })
    }

    /// Whether the pipeline feeds competition-encoder slots to this module.
    pub fn uses_primitive_slots(self) -> bool {
        self != VariantKind::SlotAttention
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of a grouping module.
#[derive(Clone, Copy, Debug)]
pub struct GroupingOutput {
    pub slots: SlotSet,
    /// Attention of the final evaluation, `None` when the module has none.
    pub attention: Option<AttentionMap>,
}

/// A constructed grouping module.
#[derive(Clone, Debug)]
pub enum Grouping {
    Ssa(SsaLayer),
    None,
    CrossAttention(CrossAttention),
    SaAttention(SaAttention),
    SlotAttention(SlotAttention),
}

impl Grouping {
    pub fn new<T: Real, R: Rng + ?Sized>(
        kind: VariantKind,
        store: &mut ParamStore<T>,
        cfg: &SampConfig,
        iters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.slot_dim;
        let eps = cfg.layer_norm_eps;
        Ok(match kind {
            VariantKind::Ssa => Grouping::Ssa(SsaLayer::new(store, d, cfg.tau(), eps, rng)?),
            VariantKind::None => Grouping::None,
            VariantKind::CrossAttention => Grouping::CrossAttention(CrossAttention::new(store, d, eps, rng)?),
            VariantKind::SaAttention => Grouping::SaAttention(SaAttention::new(store, d, eps, rng)?),
            VariantKind::SlotAttention => {
                let sa_cfg = SlotAttentionConfig {
                    iters,
                    ..SlotAttentionConfig::new(cfg.n_slots, d)
                };
                Grouping::SlotAttention(SlotAttention::new(store, sa_cfg, eps, rng)?)
            }
        })
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            Grouping::Ssa(_) => VariantKind::Ssa,
            Grouping::None => VariantKind::None,
            Grouping::CrossAttention(_) => VariantKind::CrossAttention,
            Grouping::SaAttention(_) => VariantKind::SaAttention,
            Grouping::SlotAttention(_) => VariantKind::SlotAttention,
        }
    }

    /// Runs the module on `inputs[B,P,D]`. `slots_in[B,n,D]` holds the
    /// primitive slots, or the Gaussian noise for the Slot Attention baseline.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        inputs: Var,
        slots_in: Var,
    ) -> Result<GroupingOutput> {
        Ok(match self {
            Grouping::Ssa(layer) => {
                let out = layer.forward(store, tape, inputs, slots_in)?;
                GroupingOutput {
                    slots: out.slots,
                    attention: Some(out.attention),
                }
            }
            Grouping::None => GroupingOutput {
                slots: SlotSet { slots: slots_in },
                attention: None,
            },
            Grouping::CrossAttention(m) => m.forward(store, tape, inputs, slots_in)?,
            Grouping::SaAttention(m) => m.forward(store, tape, inputs, slots_in)?,
            Grouping::SlotAttention(m) => m.forward(store, tape, inputs, slots_in)?,
        })
    }
}
