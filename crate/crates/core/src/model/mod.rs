//! The SAMP model: pixel encoder, competition encoder, grouping module,
//! spatial broadcast decoder and mask mixing.

mod config;
mod encoder;
mod layers;
mod posemb;
mod ssa;

pub use config::{plan_competition, slot_grid, CompetitionLayer, DecoderLayer, Preset, SampConfig, TemperatureMode};
pub use encoder::{CompetitionEncoder, PixelEncoder, SpatialBroadcastDecoder};
pub use layers::{Conv, LayerNorm, Linear};
pub use posemb::{base_grid, PositionalEmbedding};
pub use ssa::{ssa_attention_core, SsaLayer, SsaOutput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baseline::{Grouping, GroupingOutput, VariantKind};
use crate::error::{Result, SampError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Per-pixel features `[B, P, D]` with positions already added.
#[derive(Clone, Copy, Debug)]
pub struct PixelFeatures {
    pub features: Var,
    pub spatial: (usize, usize),
}

/// Competition-encoder output `[B, n, D]`, one slot per grid cell in
/// row-major order.
#[derive(Clone, Copy, Debug)]
pub struct PrimitiveSlots {
    pub slots: Var,
    pub grid: (usize, usize),
}

/// Axis along which an attention map is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionAxis {
    /// Each pixel's row over slots sums to 1.
    Slots,
    /// Each slot's column over pixels sums to 1.
    Pixels,
}

/// Attention weights `[B, P, n]`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMap {
    pub weights: Var,
    pub axis: AttentionAxis,
}

/// Slot vectors `[B, n, D]`.
#[derive(Clone, Copy, Debug)]
pub struct SlotSet {
    pub slots: Var,
}

/// Per-slot decoder output: `rgb[B,n,3,H,W]`, `mask_logits[B,n,1,H,W]`.
#[derive(Clone, Copy, Debug)]
pub struct SlotDecodeOutput {
    pub rgb: Var,
    pub mask_logits: Var,
}

/// Mixed image `[B,3,H,W]` and mixing weights `[B,n,H,W]`.
#[derive(Clone, Copy, Debug)]
pub struct Reconstruction {
    pub image: Var,
    pub mixing_weights: Var,
}

/// Every intermediate of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub features: PixelFeatures,
    pub primitive: Option<PrimitiveSlots>,
    pub grouping: GroupingOutput,
    pub decoded: SlotDecodeOutput,
    pub reconstruction: Reconstruction,
    pub loss: Var,
}

/// Softmax over the slot axis of the mask logits, then the weighted sum of
/// per-slot images.
pub fn mix_reconstructions<T: Real>(tape: &mut Tape<T>, decoded: &SlotDecodeOutput) -> Result<Reconstruction> {
    let weights = tape.softmax(decoded.mask_logits, 1)?;
    let weighted = tape.mul(decoded.rgb, weights)?;
    let image = tape.sum_axis(weighted, 1)?;
    let s = tape.shape(weights).to_vec();
    let mixing_weights = tape.reshape(weights, &[s[0], s[1], s[3], s[4]])?;
    Ok(Reconstruction { image, mixing_weights })
}

/// Random-number stream indices, one per module, so that modules shared by
/// different variants receive identical initial values.
const STREAM_ENCODER: u64 = 0;
const STREAM_COMPETITION: u64 = 1;
const STREAM_GROUPING: u64 = 2;
const STREAM_DECODER: u64 = 3;

fn module_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Architecture of a SAMP-style model; parameter values live in a separate
/// [`ParamStore`] so the same network runs in either precision.
#[derive(Clone, Debug)]
pub struct SampNet {
    config: SampConfig,
    encoder: PixelEncoder,
    competition: Option<CompetitionEncoder>,
    grouping: Grouping,
    decoder: SpatialBroadcastDecoder,
}

impl SampNet {
    /// Builds the network and initializes its parameters from `seed`.
    /// `iters` is only used by the Slot Attention baseline.
    pub fn build<T: Real>(
        config: &SampConfig,
        variant: VariantKind,
        iters: usize,
        seed: u64,
    ) -> Result<(SampNet, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = PixelEncoder::new(&mut store, config, &mut module_rng(seed, STREAM_ENCODER))?;
        let competition = if variant.uses_primitive_slots() {
            Some(CompetitionEncoder::new(
                &mut store,
                config,
                &mut module_rng(seed, STREAM_COMPETITION),
            )?)
        } else {
            None
        };
        let grouping = Grouping::new(variant, &mut store, config, iters, &mut module_rng(seed, STREAM_GROUPING))?;
        let decoder = SpatialBroadcastDecoder::new(&mut store, config, &mut module_rng(seed, STREAM_DECODER))?;
        Ok((
            SampNet {
                config: config.clone(),
                encoder,
                competition,
                grouping,
                decoder,
            },
            store,
        ))
    }

    pub fn config(&self) -> &SampConfig {
        &self.config
    }

    pub fn variant(&self) -> VariantKind {
        self.grouping.kind()
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    /// Whether [`SampNet::forward`] needs slot-initialization noise.
    pub fn needs_noise(&self) -> bool {
        !self.variant().uses_primitive_slots()
    }

    /// Standard-normal noise `[batch, n, D]` for the Slot Attention baseline.
    pub fn sample_noise<T: Real, R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor<T> {
        let n = batch * self.config.n_slots * self.config.slot_dim;
        let data = (0..n)
            .map(|_| T::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Tensor::new(vec![batch, self.config.n_slots, self.config.slot_dim], data).expect("noise shape")
    }

    pub fn encode<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, image: Var) -> Result<PixelFeatures> {
        self.encoder.forward(store, tape, image)
    }

    /// Primitive slots; errors for the Slot Attention baseline, which has no
    /// competition encoder.
    pub fn compete<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        features: &PixelFeatures,
    ) -> Result<PrimitiveSlots> {
        match &self.competition {
            Some(c) => c.forward(store, tape, features),
            None => Err(SampError::Config("this variant has no competition encoder".into())),
        }
    }

    pub fn group<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        features: &PixelFeatures,
        slots_in: Var,
    ) -> Result<GroupingOutput> {
        self.grouping.forward(store, tape, features.features, slots_in)
    }

    pub fn decode<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, slots: &SlotSet) -> Result<SlotDecodeOutput> {
        let (rgb, mask_logits) = self.decoder.forward(store, tape, slots.slots)?;
        Ok(SlotDecodeOutput { rgb, mask_logits })
    }

    /// Full pipeline on `image[B,3,H,W]` (values in `[0,1]`), ending in the
    /// reconstruction loss. `noise` is required by the Slot Attention
    /// baseline and ignored otherwise.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        image: Var,
        noise: Option<Var>,
    ) -> Result<ForwardOutput> {
        let features = self.encode(store, tape, image)?;
        let (primitive, slots_in) = match &self.competition {
            Some(c) => {
                let p = c.forward(store, tape, &features)?;
                (Some(p), p.slots)
            }
            None => {
                let noise = noise.ok_or_else(|| SampError::InvalidArgument("slot attention needs initialization noise".into()))?;
                (None, noise)
            }
        };
        let grouping = self.group(store, tape, &features, slots_in)?;
        let decoded = self.decode(store, tape, &grouping.slots)?;
        let reconstruction = mix_reconstructions(tape, &decoded)?;
        let loss = tape.mse_loss(reconstruction.image, image)?;
        Ok(ForwardOutput {
            features,
            primitive,
            grouping,
            decoded,
            reconstruction,
            loss,
        })
    }
}
