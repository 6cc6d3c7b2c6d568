//! Pixel encoder and competition encoder.

use rand::Rng;

use super::config::{CompetitionLayer, SampConfig};
use super::layers::{Conv, LayerNorm, Linear};
use super::posemb::PositionalEmbedding;
use super::{PixelFeatures, PrimitiveSlots};
use crate::error::{Result, SampError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Convolutional encoder producing per-pixel features with positions added.
#[derive(Clone, Debug)]
pub struct PixelEncoder {
    convs: Vec<Conv>,
    pos: PositionalEmbedding,
    norm: LayerNorm,
    mlp0: Linear,
    mlp1: Linear,
    image_size: (usize, usize),
}

impl PixelEncoder {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &SampConfig, rng: &mut R) -> Result<Self> {
        let c = cfg.channels;
        let k = cfg.encoder_kernel;
        let mut convs = Vec::with_capacity(cfg.encoder_convs);
        for i in 0..cfg.encoder_convs {
            let c_in = if i == 0 { 3 } else { c };
            convs.push(Conv::new(store, &format!("encoder.conv{i}"), c_in, c, k, 1, k / 2, rng)?);
        }
        let pos = PositionalEmbedding::new(store, "encoder.pos", c, rng)?;
        let norm = LayerNorm::new(store, "encoder.norm", c, cfg.layer_norm_eps)?;
        let mlp0 = Linear::new(store, "encoder.mlp0", c, cfg.slot_dim, true, rng)?;
        let mlp1 = Linear::new(store, "encoder.mlp1", cfg.slot_dim, cfg.slot_dim, true, rng)?;
        Ok(PixelEncoder {
            convs,
            pos,
            norm,
            mlp0,
            mlp1,
            image_size: cfg.image_size,
        })
    }

    /// Encodes `image[B,3,H,W]` into features `[B, H·W, D]`.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, image: Var) -> Result<PixelFeatures> {
        let s = tape.shape(image).to_vec();
        let (h, w) = self.image_size;
        if s.len() != 4 || s[1] != 3 || (s[2], s[3]) != (h, w) {
            return Err(SampError::shape("encode_image", format!("image {s:?}, preset expects [B,3,{h},{w}]")));
        }
        let b = s[0];
        let mut x = image;
        for conv in &self.convs {
            x = conv.forward(store, tape, x)?;
            x = tape.relu(x)?;
        }
        let x = tape.permute(x, &[0, 2, 3, 1])?;
        let pos = self.pos.forward(store, tape, h, w)?;
        let x = tape.add(x, pos)?;
        let c = tape.shape(x)[3];
        let x = tape.reshape(x, &[b, h * w, c])?;
        let x = self.norm.forward(store, tape, x)?;
        let x = self.mlp0.forward(store, tape, x)?;
        let x = tape.relu(x)?;
        let features = self.mlp1.forward(store, tape, x)?;
        Ok(PixelFeatures {
            features,
            spatial: (h, w),
        })
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Conv(Conv),
    Pool { kernel: (usize, usize), stride: (usize, usize) },
}

/// Alternating convolution / max-pool stack that turns pixel features into
/// one primitive slot per output cell.
#[derive(Clone, Debug)]
pub struct CompetitionEncoder {
    stages: Vec<Stage>,
    fc0: Linear,
    fc1: Linear,
    slope: f64,
    grid: (usize, usize),
}

impl CompetitionEncoder {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &SampConfig, rng: &mut R) -> Result<Self> {
        let mut c_in = cfg.slot_dim;
        let mut stages = Vec::new();
        let mut conv_idx = 0;
        for layer in &cfg.competition {
            match *layer {
                CompetitionLayer::Conv { channels, kernel, pad } => {
                    let name = format!("competition.conv{conv_idx}");
                    stages.push(Stage::Conv(Conv::new(store, &name, c_in, channels, kernel, 1, pad, rng)?));
                    c_in = channels;
                    conv_idx += 1;
                }
                CompetitionLayer::MaxPool { kernel, stride } => stages.push(Stage::Pool { kernel, stride }),
            }
        }
        let fc0 = Linear::new(store, "competition.fc0", c_in, cfg.slot_dim, true, rng)?;
        let fc1 = Linear::new(store, "competition.fc1", cfg.slot_dim, cfg.slot_dim, true, rng)?;
        Ok(CompetitionEncoder {
            stages,
            fc0,
            fc1,
            slope: cfg.leaky_slope,
            grid: cfg.competition_grid()?,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Primitive slots `[B, n_h·n_w, D]` from pixel features.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        features: &PixelFeatures,
    ) -> Result<PrimitiveSlots> {
        let fs = tape.shape(features.features).to_vec();
        let (h, w) = features.spatial;
        let x = tape.reshape(features.features, &[fs[0], h, w, fs[2]])?;
        let mut x = tape.permute(x, &[0, 3, 1, 2])?;
        let slope = T::from_f64_lossy(self.slope);
        for stage in &self.stages {
            x = match stage {
                Stage::Conv(conv) => {
                    let y = conv.forward(store, tape, x)?;
                    tape.leaky_relu(y, slope)?
                }
                Stage::Pool { kernel, stride } => tape.maxpool2d_rect(x, *kernel, *stride)?,
            };
        }
        let s = tape.shape(x).to_vec();
        if (s[2], s[3]) != self.grid {
            return Err(SampError::shape("competition_encode", format!("output grid {s:?}, expected {:?}", self.grid)));
        }
        let x = tape.permute(x, &[0, 2, 3, 1])?;
        let x = tape.reshape(x, &[s[0], s[2] * s[3], s[1]])?;
        let x = self.fc0.forward(store, tape, x)?;
        let x = tape.leaky_relu(x, slope)?;
        let slots = self.fc1.forward(store, tape, x)?;
        Ok(PrimitiveSlots { slots, grid: self.grid })
    }
}

/// Spatial broadcast decoder applied to every slot independently.
#[derive(Clone, Debug)]
pub struct SpatialBroadcastDecoder {
    pos: PositionalEmbedding,
    layers: Vec<(Conv, bool)>,
    broadcast: (usize, usize),
}

impl SpatialBroadcastDecoder {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &SampConfig, rng: &mut R) -> Result<Self> {
        let pos = PositionalEmbedding::new(store, "decoder.pos", cfg.slot_dim, rng)?;
        let mut c_in = cfg.slot_dim;
        let mut layers = Vec::new();
        for (i, l) in cfg.decoder.iter().enumerate() {
            let name = format!("decoder.conv{i}");
            let conv = if l.transposed {
                Conv::transposed(store, &name, c_in, l.channels, l.kernel, l.stride, l.pad, l.output_padding, rng)?
            } else {
                Conv::new(store, &name, c_in, l.channels, l.kernel, l.stride, l.pad, rng)?
            };
            layers.push((conv, l.relu));
            c_in = l.channels;
        }
        Ok(SpatialBroadcastDecoder {
            pos,
            layers,
            broadcast: cfg.decoder_broadcast,
        })
    }

    /// Decodes `slots[B,n,D]` into `(rgb[B,n,3,H,W], mask_logits[B,n,1,H,W])`.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, tape: &mut Tape<T>, slots: Var) -> Result<(Var, Var)> {
        let s = tape.shape(slots).to_vec();
        let (b, n, d) = (s[0], s[1], s[2]);
        let (bh, bw) = self.broadcast;
        let x = tape.reshape(slots, &[b * n, 1, 1, d])?;
        let x = tape.broadcast_to(x, &[b * n, bh, bw, d])?;
        let pos = self.pos.forward(store, tape, bh, bw)?;
        let x = tape.add(x, pos)?;
        let mut x = tape.permute(x, &[0, 3, 1, 2])?;
        for (conv, relu) in &self.layers {
            x = conv.forward(store, tape, x)?;
            if *relu {
                x = tape.relu(x)?;
            }
        }
        let o = tape.shape(x).to_vec();
        let x = tape.reshape(x, &[b, n, 4, o[2], o[3]])?;
        let rgb = tape.slice(x, 2, 0, 3)?;
        let mask = tape.slice(x, 2, 3, 1)?;
        Ok((rgb, mask))
    }
}
