//! Batched inference and FG-ARI evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Sample, BACKGROUND_LABEL};
use crate::error::{Result, SampError};
use crate::metrics::{fg_ari, masks_to_labels, mean_std};
use crate::model::{ForwardOutput, SampNet};
use crate::param::ParamStore;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Stacks sample images into `[B,3,H,W]`.
pub fn images_tensor(samples: &[&Sample]) -> Result<Tensor<f32>> {
    let first = samples
        .first()
        .ok_or_else(|| SampError::InvalidArgument("empty batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(samples.len() * 3 * h * w);
    for s in samples {
        if (s.height, s.width) != (h, w) {
            return Err(SampError::shape("images_tensor", "samples differ in size"));
        }
        data.extend_from_slice(&s.image);
    }
    Tensor::new(vec![samples.len(), 3, h, w], data)
}

/// Runs the model on a batch, returning the tape and its outputs. Noise for
/// the Slot Attention baseline is drawn from `noise_seed`.
pub fn forward_batch(
    net: &SampNet,
    store: &ParamStore<f32>,
    samples: &[&Sample],
    noise_seed: u64,
) -> Result<(Tape<f32>, ForwardOutput)> {
    let images = images_tensor(samples)?;
    let mut tape = Tape::new();
    let x = tape.input(images);
    let noise = if net.needs_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        Some(tape.input(net.sample_noise(samples.len(), &mut rng)))
    } else {
        None
    };
    let out = net.forward(store, &mut tape, x, noise)?;
    Ok((tape, out))
}

/// Per-sample FG-ARI scores with their mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_index,fg_ari\n");
        for (i, v) in self.scores.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_samples": self.scores.len(),
            "mean": self.mean,
            "std": self.std,
        })
    }
}

/// Predicted segmentation of each sample (argmax of the mixing weights)
/// scored against its ground truth with FG-ARI.
pub fn evaluate(
    net: &SampNet,
    store: &ParamStore<f32>,
    samples: &[Sample],
    batch_size: usize,
    noise_seed: u64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(SampError::InvalidArgument("no samples to evaluate".into()));
    }
    let cfg = net.config();
    if (samples[0].height, samples[0].width) != cfg.image_size {
        return Err(SampError::Config(format!(
            "dataset images are {}x{}, model expects {:?}",
            samples[0].height, samples[0].width, cfg.image_size
        )));
    }
    let n = cfg.n_slots;
    let mut scores = Vec::with_capacity(samples.len());
    for (bi, chunk) in samples.chunks(batch_size.max(1)).enumerate() {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (tape, out) = forward_batch(net, store, &refs, noise_seed.wrapping_add(bi as u64))?;
        let weights = tape.data(out.reconstruction.mixing_weights);
        let per = weights.len() / chunk.len();
        for (i, s) in chunk.iter().enumerate() {
            let pred = masks_to_labels(&weights[i * per..(i + 1) * per], n);
            let gt: Vec<u32> = s.labels.iter().map(|&l| l as u32).collect();
            scores.push(fg_ari(&pred, &gt, BACKGROUND_LABEL as u32)?);
        }
    }
    let (mean, std) = mean_std(&scores);
    Ok(EvalReport { scores, mean, std })
}
