//! Deterministic synthetic multi-object datasets with ground-truth instance
//! labels, and their on-disk format.

mod dataset;
mod rng;
mod sprites;
mod tetromino;

pub use dataset::{read_split, write_dataset, Dataset, DatasetManifest, Split, SplitEntry, SplitSizes, FORMAT_VERSION};
pub use rng::{sample_seed, SceneRng, RNG_NAME, SEED_RULE};
pub use sprites::{gen_sprites_scene, rasterize_sprites, SpriteObject, SpriteShape, HEART_TEMPLATE};
pub use tetromino::{gen_tetromino_scene, Tetromino, TETROMINOES};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SampError};
use crate::model::Preset;

/// Label of background pixels.
pub const BACKGROUND_LABEL: u8 = 0;

/// Kind of objects placed in a scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    /// Non-overlapping tetris pieces.
    Tetromino,
    /// Ellipses, squares and hearts with occlusion.
    Sprite,
}

impl ShapeFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tetromino" | "tetrominoes" => Ok(ShapeFamily::Tetromino),
            "sprite" | "sprites" | "multi_dsprites" => Ok(ShapeFamily::Sprite),
            _ => Err(SampError::Config(format!("unknown shape family `{s}`"))),
        }
    }
}

/// Description of a scene distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// `(H, W)`.
    pub image_size: (usize, usize),
    /// Inclusive object-count range; sampled uniformly.
    pub n_objects: (usize, usize),
    pub shape_family: ShapeFamily,
    /// RGB triples in `[0,1]`.
    pub palette: Vec<[f32; 3]>,
    pub allow_occlusion: bool,
    pub background_color: [f32; 3],
    pub seed: u64,
    /// Side of one tetromino cell in pixels.
    pub cell_size: usize,
    /// Inclusive sprite size range in pixels.
    pub sprite_size: (usize, usize),
}

/// Six saturated colors, far apart in RGB space.
pub fn default_palette() -> Vec<[f32; 3]> {
    vec![
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
    ]
}

impl SceneSpec {
    /// Three tetrominoes without occlusion on a black canvas.
    pub fn tetromino(image_size: (usize, usize), seed: u64) -> Self {
        SceneSpec {
            image_size,
            n_objects: (3, 3),
            shape_family: ShapeFamily::Tetromino,
            palette: default_palette(),
            allow_occlusion: false,
            background_color: [0.0; 3],
            seed,
            cell_size: (image_size.0.min(image_size.1) / 8).max(1),
            sprite_size: (0, 0),
        }
    }

    /// Two to five occluding sprites on a black canvas.
    pub fn sprites(image_size: (usize, usize), seed: u64) -> Self {
        let m = image_size.0.min(image_size.1);
        SceneSpec {
            image_size,
            n_objects: (2, 5),
            shape_family: ShapeFamily::Sprite,
            palette: default_palette(),
            allow_occlusion: true,
            background_color: [0.0; 3],
            seed,
            cell_size: 0,
            sprite_size: ((m / 5).max(2), (m * 2 / 5).max(3)),
        }
    }

    /// Spec matching a model preset's image size.
    pub fn for_preset(family: ShapeFamily, preset: Preset, seed: u64) -> Self {
        let size = crate::model::SampConfig::preset(preset).image_size;
        match family {
            ShapeFamily::Tetromino => Self::tetromino(size, seed),
            ShapeFamily::Sprite => Self::sprites(size, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SampError::Config(m.to_string()));
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return bad("image size must be positive");
        }
        if self.n_objects.0 > self.n_objects.1 {
            return bad("n_objects range is empty");
        }
        if self.n_objects.1 > 254 {
            return bad("at most 254 objects fit in u8 labels");
        }
        if self.palette.is_empty() && self.n_objects.1 > 0 {
            return bad("palette is empty");
        }
        let in_unit = |c: &[f32; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !self.palette.iter().all(in_unit) || !in_unit(&self.background_color) {
            return bad("colors must lie in [0,1]");
        }
        match self.shape_family {
            ShapeFamily::Tetromino => {
                if self.allow_occlusion {
                    return bad("tetromino scenes never occlude");
                }
                if self.cell_size == 0 {
                    return bad("cell_size must be positive");
                }
            }
            ShapeFamily::Sprite => {
                let (lo, hi) = self.sprite_size;
                if lo < 2 || lo > hi || hi > h.min(w) {
                    return bad("sprite_size must satisfy 2 <= min <= max <= image side");
                }
            }
        }
        Ok(())
    }

    /// Generates sample `index` of the split identified by `split_tag`.
    pub fn generate(&self, split_tag: u64, index: u64) -> Result<Sample> {
        let seed = sample_seed(self.seed, split_tag, index);
        match self.shape_family {
            ShapeFamily::Tetromino => gen_tetromino_scene(self, seed),
            ShapeFamily::Sprite => gen_sprites_scene(self, seed),
        }
    }
}

/// An image with its instance-label map.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    /// Planar `3×H×W` values in `[0,1]`.
    pub image: Vec<f32>,
    /// `H×W` labels; 0 is background, objects are `1..=k`.
    pub labels: Vec<u8>,
}

impl Sample {
    /// Canvas filled with the background color and label.
    pub fn blank(height: usize, width: usize, background: [f32; 3]) -> Self {
        let plane = height * width;
        let mut image = vec![0.0; 3 * plane];
        for (c, chunk) in image.chunks_mut(plane).enumerate() {
            chunk.fill(background[c]);
        }
        Sample {
            height,
            width,
            image,
            labels: vec![BACKGROUND_LABEL; plane],
        }
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, color: [f32; 3], label: u8) {
        let plane = self.height * self.width;
        let i = y * self.width + x;
        for (c, &v) in color.iter().enumerate() {
            self.image[c * plane + i] = v;
        }
        self.labels[i] = label;
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let plane = self.height * self.width;
        let i = y * self.width + x;
        [self.image[i], self.image[plane + i], self.image[2 * plane + i]]
    }

    /// Number of distinct foreground labels.
    pub fn n_objects(&self) -> usize {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen[1..].iter().filter(|&&s| s).count()
    }
}

/// Colors for `k` objects: distinct palette entries when the palette is large
/// enough, otherwise independent draws.
pub(crate) fn pick_colors(spec: &SceneSpec, rng: &mut SceneRng, k: usize) -> Vec<[f32; 3]> {
    if spec.palette.len() >= k {
        rng.choose_distinct(spec.palette.len(), k)
            .into_iter()
            .map(|i| spec.palette[i])
            .collect()
    } else {
        (0..k).map(|_| spec.palette[rng.below(spec.palette.len())]).collect()
    }
}
