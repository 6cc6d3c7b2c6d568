//! Figure-style image grids: reconstructions per slot and attention
//! heatmaps, written as binary PPM.

use std::path::{Path, PathBuf};

use crate::data::Sample;
use crate::error::Result;
use crate::model::SampNet;
use crate::param::ParamStore;
use crate::train::forward_batch;
use crate::util::atomic_write;

/// Gap between panels, in pixels.
pub const GAP: usize = 1;
/// Color of the gap between panels.
pub const GAP_VALUE: u8 = 255;
/// Gray level of a heatmap whose values are all equal.
pub const DEGENERATE_GRAY: u8 = 128;

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8Image {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Rgb8Image {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Planar `[3,H,W]` values in `[0,1]` (clamped) to 8-bit.
    pub fn from_planar(planar: &[f32], height: usize, width: usize) -> Self {
        let plane = height * width;
        let mut img = Rgb8Image::filled(width, height, 0);
        for i in 0..plane {
            for c in 0..3 {
                img.data[i * 3 + c] = (planar[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        img
    }

    /// Grayscale heatmap, min-max normalized; constant maps render mid-gray.
    pub fn heatmap(values: &[f32], height: usize, width: usize) -> Self {
        let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut img = Rgb8Image::filled(width, height, DEGENERATE_GRAY);
        if hi > lo {
            for (i, &v) in values.iter().enumerate() {
                let g = (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8;
                img.data[i * 3..i * 3 + 3].fill(g);
            }
        }
        img
    }

    /// Panels side by side separated by [`GAP`] pixels.
    pub fn hstack(panels: &[Rgb8Image]) -> Self {
        let height = panels.iter().map(|p| p.height).max().unwrap_or(0);
        let width = panels.iter().map(|p| p.width).sum::<usize>() + GAP * panels.len().saturating_sub(1);
        let mut out = Rgb8Image::filled(width, height, GAP_VALUE);
        let mut x0 = 0;
        for p in panels {
            for y in 0..p.height {
                let src = &p.data[y * p.width * 3..(y + 1) * p.width * 3];
                let dst = (y * width + x0) * 3;
                out.data[dst..dst + src.len()].copy_from_slice(src);
            }
            x0 += p.width + GAP;
        }
        out
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Rendered grids for one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedSample {
    /// `[original | mixed reconstruction | per-slot rgb without mask]`.
    pub reconstruction: Rgb8Image,
    /// `[original | attention heatmap per slot]`; `None` when the grouping
    /// module has no attention.
    pub attention: Option<Rgb8Image>,
    /// Number of panels in the reconstruction row.
    pub panels: usize,
}

pub fn render_sample(net: &SampNet, store: &ParamStore<f32>, sample: &Sample, noise_seed: u64) -> Result<RenderedSample> {
    let (tape, out) = forward_batch(net, store, &[sample], noise_seed)?;
    let (h, w) = (sample.height, sample.width);
    let plane = h * w;
    let n = net.config().n_slots;
    let original = Rgb8Image::from_planar(&sample.image, h, w);
    let mut recon = vec![original.clone(), Rgb8Image::from_planar(tape.data(out.reconstruction.image), h, w)];
    let rgb = tape.data(out.decoded.rgb);
    for s in 0..n {
        recon.push(Rgb8Image::from_planar(&rgb[s * 3 * plane..(s + 1) * 3 * plane], h, w));
    }
    let attention = out.grouping.attention.map(|map| {
        let weights = tape.data(map.weights);
        let (fh, fw) = out.features.spatial;
        let p = fh * fw;
        let mut panels = vec![original.clone()];
        for s in 0..n {
            let column: Vec<f32> = (0..p).map(|i| weights[i * n + s]).collect();
            panels.push(Rgb8Image::heatmap(&column, fh, fw));
        }
        Rgb8Image::hstack(&panels)
    });
    Ok(RenderedSample {
        panels: recon.len(),
        reconstruction: Rgb8Image::hstack(&recon),
        attention,
    })
}

fn write_rendered(r: &RenderedSample, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let recon = dir.join(format!("{stem}_recon.ppm"));
    atomic_write(&recon, &r.reconstruction.to_ppm())?;
    paths.push(recon);
    if let Some(a) = &r.attention {
        let p = dir.join(format!("{stem}_attn.ppm"));
        atomic_write(&p, &a.to_ppm())?;
        paths.push(p);
    }
    Ok(paths)
}

/// Renders the first `n_samples` samples into `out_dir`.
pub fn render_grid(
    net: &SampNet,
    store: &ParamStore<f32>,
    samples: &[Sample],
    n_samples: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if n_samples == 0 {
        return Err(crate::SampError::InvalidArgument("n_samples must be at least 1".into()));
    }
    let mut paths = Vec::new();
    for (i, s) in samples.iter().take(n_samples).enumerate() {
        let r = render_sample(net, store, s, i as u64)?;
        paths.extend(write_rendered(&r, out_dir, &format!("sample_{i:03}"))?);
    }
    Ok(paths)
}

/// Training-time snapshot of one sample after `step` updates.
pub fn write_snapshot(net: &SampNet, store: &ParamStore<f32>, sample: &Sample, dir: &Path, step: usize) -> Result<()> {
    let r = render_sample(net, store, sample, 0)?;
    write_rendered(&r, dir, &format!("step_{step:06}")).map(|_| ())
}
