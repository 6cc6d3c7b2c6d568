//! Architecture presets and the construction rule for competition encoders.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SampError};

/// Named architecture presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Tetrominoes,
    MultiDsprites,
    Clevr6,
    Mini,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Tetrominoes, Preset::MultiDsprites, Preset::Clevr6, Preset::Mini];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tetrominoes => "tetrominoes",
            Preset::MultiDsprites => "multi_dsprites",
            Preset::Clevr6 => "clevr6",
            Preset::Mini => "mini",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SampError::Config(format!("unknown preset `{s}`")))
    }
}

/// One stage of the competition encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CompetitionLayer {
    /// Convolution (stride 1) followed by LeakyReLU.
    Conv { channels: usize, kernel: usize, pad: usize },
    /// Max pooling without padding; `(rows, cols)` kernel and stride.
    MaxPool { kernel: (usize, usize), stride: (usize, usize) },
}

/// One decoder convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Transposed convolution (learned upsampling) when true.
    pub transposed: bool,
    pub output_padding: usize,
    pub relu: bool,
}

impl DecoderLayer {
    fn conv(channels: usize, kernel: usize, relu: bool) -> Self {
        DecoderLayer {
            channels,
            kernel,
            stride: 1,
            pad: kernel / 2,
            transposed: false,
            output_padding: 0,
            relu,
        }
    }

    fn upsample(channels: usize) -> Self {
        DecoderLayer {
            channels,
            kernel: 5,
            stride: 2,
            pad: 2,
            transposed: true,
            output_padding: 1,
            relu: true,
        }
    }
}

/// Attention temperature rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// `tau = sqrt(n_slots)`.
    SqrtN,
}

/// Full architecture description of a SAMP model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampConfig {
    pub preset: Preset,
    /// `(H, W)` of input images.
    pub image_size: (usize, usize),
    /// Channels of the convolutional stages.
    pub channels: usize,
    /// Number of convolutions in the pixel encoder.
    pub encoder_convs: usize,
    pub encoder_kernel: usize,
    pub n_slots: usize,
    /// Width of pixel features, slots and the decoder input.
    pub slot_dim: usize,
    pub competition: Vec<CompetitionLayer>,
    /// Spatial extent the decoder broadcasts each slot to.
    pub decoder_broadcast: (usize, usize),
    pub decoder: Vec<DecoderLayer>,
    pub leaky_slope: f64,
    pub temperature: TemperatureMode,
    pub layer_norm_eps: f64,
}

impl SampConfig {
    /// Preset architecture with its native slot count.
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Tetrominoes => Self::build(preset, (35, 35), 32, 4, false),
            Preset::MultiDsprites => Self::build(preset, (64, 64), 64, 9, false),
            Preset::Clevr6 => Self::build(preset, (128, 128), 64, 9, true),
            Preset::Mini => Self::build(preset, (32, 32), 32, 4, false),
        }
    }

    /// Preset architecture with a different slot count; the competition
    /// encoder is re-planned for the new grid.
    pub fn with_slots(preset: Preset, n_slots: usize) -> Result<Self> {
        let mut cfg = Self::preset(preset);
        cfg.n_slots = n_slots;
        cfg.competition = plan_competition(cfg.image_size, n_slots, cfg.channels)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Small configuration for gradient checks: `size`×`size` input, two
    /// slots, narrow layers.
    pub fn tiny(size: usize, channels: usize) -> Result<Self> {
        let mut cfg = Self::preset(Preset::Mini);
        cfg.image_size = (size, size);
        cfg.channels = channels;
        cfg.slot_dim = channels;
        cfg.encoder_convs = 2;
        cfg.encoder_kernel = 3;
        cfg.n_slots = 2;
        cfg.competition = plan_competition((size, size), 2, channels)?
            .into_iter()
            .map(|l| match l {
                CompetitionLayer::Conv { channels, .. } => CompetitionLayer::Conv {
                    channels,
                    kernel: 3,
                    pad: 1,
                },
                pool => pool,
            })
            .collect();
        cfg.decoder_broadcast = (size, size);
        cfg.decoder = vec![DecoderLayer::conv(channels, 3, true), DecoderLayer::conv(4, 3, false)];
        cfg.validate()?;
        Ok(cfg)
    }

    fn build(preset: Preset, image_size: (usize, usize), c: usize, n_slots: usize, upsample: bool) -> Self {
        let competition = plan_competition(image_size, n_slots, c).expect("preset grids are valid");
        let (decoder_broadcast, decoder) = if upsample {
            let mut layers = vec![DecoderLayer::upsample(c); 4];
            layers.push(DecoderLayer::conv(c, 5, true));
            layers.push(DecoderLayer::conv(4, 3, false));
            ((image_size.0 / 16, image_size.1 / 16), layers)
        } else {
            let mut layers = vec![DecoderLayer::conv(c, 5, true); 3];
            layers.push(DecoderLayer::conv(4, 3, false));
            (image_size, layers)
        };
        SampConfig {
            preset,
            image_size,
            channels: c,
            encoder_convs: 4,
            encoder_kernel: 5,
            n_slots,
            slot_dim: c,
            competition,
            decoder_broadcast,
            decoder,
            leaky_slope: 0.01,
            temperature: TemperatureMode::SqrtN,
            layer_norm_eps: 1e-5,
        }
    }

    /// Attention temperature.
    pub fn tau(&self) -> f64 {
        match self.temperature {
            TemperatureMode::SqrtN => (self.n_slots as f64).sqrt(),
        }
    }

    /// Number of pixels `P = H·W`.
    pub fn pixels(&self) -> usize {
        self.image_size.0 * self.image_size.1
    }

    /// Output grid `(n_h, n_w)` of the competition encoder.
    pub fn competition_grid(&self) -> Result<(usize, usize)> {
        let (mut h, mut w) = self.image_size;
        for layer in &self.competition {
            match *layer {
                CompetitionLayer::Conv { kernel, pad, .. } => {
                    if h + 2 * pad < kernel || w + 2 * pad < kernel {
                        return Err(SampError::Config(format!("competition conv {kernel}x{kernel} exceeds {h}x{w}")));
                    }
                    h = h + 2 * pad - kernel + 1;
                    w = w + 2 * pad - kernel + 1;
                }
                CompetitionLayer::MaxPool { kernel, stride } => {
                    if kernel.0 > h || kernel.1 > w || stride.0 == 0 || stride.1 == 0 {
                        return Err(SampError::Config(format!("maxpool {kernel:?} does not fit {h}x{w}")));
                    }
                    h = (h - kernel.0) / stride.0 + 1;
                    w = (w - kernel.1) / stride.1 + 1;
                }
            }
        }
        Ok((h, w))
    }

    /// Spatial size produced by the decoder stack.
    pub fn decoder_output(&self) -> Result<(usize, usize)> {
        let (mut h, mut w) = self.decoder_broadcast;
        for l in &self.decoder {
            let step = |x: usize| -> Option<usize> {
                if l.transposed {
                    ((x - 1) * l.stride + l.kernel + l.output_padding).checked_sub(2 * l.pad)
                } else {
                    (x + 2 * l.pad).checked_sub(l.kernel).map(|v| v / l.stride + 1)
                }
            };
            h = step(h).ok_or_else(|| SampError::Config("decoder layer does not fit".into()))?;
            w = step(w).ok_or_else(|| SampError::Config("decoder layer does not fit".into()))?;
        }
        Ok((h, w))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SampError::Config(m));
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("image size must be positive".into());
        }
        if self.channels == 0 || self.slot_dim == 0 || self.n_slots == 0 || self.encoder_convs == 0 {
            return bad("channels, slot_dim, n_slots and encoder_convs must be positive".into());
        }
        if self.encoder_kernel % 2 == 0 {
            return bad("encoder kernel must be odd to preserve spatial size".into());
        }
        let (nh, nw) = self.competition_grid()?;
        if nh * nw != self.n_slots {
            return bad(format!(
                "competition encoder yields a {nh}x{nw} grid but n_slots is {}",
                self.n_slots
            ));
        }
        if !matches!(self.competition.last(), Some(CompetitionLayer::MaxPool { .. }))
            || !self.competition.iter().any(|l| matches!(l, CompetitionLayer::Conv { .. }))
        {
            return bad("competition encoder must contain convolutions and end with a max pool".into());
        }
        match self.decoder.last() {
            Some(l) if l.channels == 4 && !l.relu => {}
            _ => return bad("decoder must end in a linear 4-channel layer".into()),
        }
        if self.decoder_output()? != self.image_size {
            return bad(format!(
                "decoder produces {:?}, image is {:?}",
                self.decoder_output()?,
                self.image_size
            ));
        }
        if !(self.leaky_slope >= 0.0 && self.layer_norm_eps >= 0.0) {
            return bad("leaky_slope and layer_norm_eps must be non-negative".into());
        }
        Ok(())
    }
}

/// Chooses the slot grid `(n_h, n_w)`: the factorization of `n` closest to
/// square with `n_h <= n_w`.
pub fn slot_grid(n: usize) -> (usize, usize) {
    let mut best = (1, n);
    for a in 1..=n {
        if a * a > n {
            break;
        }
        if n % a == 0 {
            best = (a, n / a);
        }
    }
    best
}

/// Plans alternating conv / max-pool stages that reduce `image` to the slot
/// grid: each axis is halved (kernel 2, stride 2) while that keeps it at or
/// above the target, then closed with a stride-1 pool of the remaining
/// excess. Reproduces the appendix tables for all presets.
pub fn plan_competition(image: (usize, usize), n_slots: usize, channels: usize) -> Result<Vec<CompetitionLayer>> {
    if n_slots == 0 {
        return Err(SampError::Config("n_slots must be positive".into()));
    }
    let (th, tw) = slot_grid(n_slots);
    let (mut h, mut w) = image;
    if h < th || w < tw {
        return Err(SampError::Config(format!("image {h}x{w} too small for a {th}x{tw} slot grid")));
    }
    let axis = |x: usize, t: usize| -> (usize, usize, usize) {
        if x / 2 >= t && x >= 2 {
            (2, 2, (x - 2) / 2 + 1)
        } else if x > t {
            (x - t + 1, 1, t)
        } else {
            (1, 1, x)
        }
    };
    let mut layers = Vec::new();
    while (h, w) != (th, tw) || layers.is_empty() {
        let (kh, sh, nh) = axis(h, th);
        let (kw, sw, nw) = axis(w, tw);
        layers.push(CompetitionLayer::Conv { channels, kernel: 5, pad: 2 });
        layers.push(CompetitionLayer::MaxPool {
            kernel: (kh, kw),
            stride: (sh, sw),
        });
        h = nh;
        w = nw;
        if layers.len() > 64 {
            return Err(SampError::Config("competition planner did not converge".into()));
        }
    }
    Ok(layers)
}
