//! Occluding sprite scenes (ellipses, squares, hearts).

use super::tetromino::MAX_ATTEMPTS;
use super::{pick_colors, Sample, SceneRng, SceneSpec, ShapeFamily};
use crate::error::{Result, SampError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpriteShape {
    Ellipse,
    Square,
    Heart,
}

impl SpriteShape {
    const ALL: [SpriteShape; 3] = [SpriteShape::Ellipse, SpriteShape::Square, SpriteShape::Heart];
}

/// Heart outline as 16 vertices inside a 16×16 box, `(x, y)` with y down.
pub const HEART_TEMPLATE: [(i64, i64); 16] = [
    (8, 3),
    (10, 1),
    (12, 0),
    (14, 1),
    (16, 4),
    (16, 6),
    (14, 10),
    (11, 13),
    (8, 16),
    (5, 13),
    (2, 10),
    (0, 6),
    (0, 4),
    (2, 1),
    (4, 0),
    (6, 1),
];

/// One sprite: shape, top-left corner of its bounding box, size and color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpriteObject {
    pub shape: SpriteShape,
    pub y0: usize,
    pub x0: usize,
    pub size: usize,
    pub color: [f32; 3],
}

impl SpriteObject {
    /// Bounding box `(height, width)`.
    pub fn extent(&self) -> (usize, usize) {
        match self.shape {
            SpriteShape::Ellipse => ((self.size * 3).div_ceil(5).max(1), self.size),
            SpriteShape::Square | SpriteShape::Heart => (self.size, self.size),
        }
    }

    /// Whether the pixel `(y, x)` (sampled at its center) is covered. Exact
    /// integer arithmetic throughout.
    pub fn covers(&self, y: usize, x: usize) -> bool {
        let (bh, bw) = self.extent();
        if y < self.y0 || x < self.x0 || y >= self.y0 + bh || x >= self.x0 + bw {
            return false;
        }
        // Pixel center relative to the box, in half-pixel units.
        let py = 2 * (y - self.y0) as i64 + 1;
        let px = 2 * (x - self.x0) as i64 + 1;
        let (h2, w2) = (2 * bh as i64, 2 * bw as i64);
        match self.shape {
            SpriteShape::Square => true,
            SpriteShape::Ellipse => {
                let dy = 2 * py - h2;
                let dx = 2 * px - w2;
                dx * dx * h2 * h2 + dy * dy * w2 * w2 <= h2 * h2 * w2 * w2
            }
            SpriteShape::Heart => {
                // Template units scaled by 2·size so the point stays integral.
                let s = 2 * self.size as i64;
                point_in_polygon(px * 16, py * 16, &HEART_TEMPLATE.map(|(vx, vy)| (vx * s, vy * s)))
            }
        }
    }
}

/// Crossing-number test with integer coordinates; points on an edge count
/// as inside, which keeps mirror-symmetric templates symmetric.
fn point_in_polygon(px: i64, py: i64, poly: &[(i64, i64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        let cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
        if cross == 0 && px >= x1.min(x2) && px <= x1.max(x2) && py >= y1.min(y2) && py <= y1.max(y2) {
            return true;
        }
        if (y1 > py) != (y2 > py) {
            // x-intersection > px  <=>  (px - x1)(y2 - y1) < (x2 - x1)(py - y1), sign-adjusted.
            let lhs = (px - x1) * (y2 - y1);
            let rhs = (x2 - x1) * (py - y1);
            if (y2 > y1 && lhs < rhs) || (y2 < y1 && lhs > rhs) {
                inside = !inside;
            }
        }
    }
    inside
}

/// Draws sprites in order (later ones occlude earlier ones); object `i`
/// receives label `i + 1`.
pub fn rasterize_sprites(h: usize, w: usize, background: [f32; 3], objects: &[SpriteObject]) -> Sample {
    let mut sample = Sample::blank(h, w, background);
    for (i, obj) in objects.iter().enumerate() {
        let (bh, bw) = obj.extent();
        for y in obj.y0..(obj.y0 + bh).min(h) {
            for x in obj.x0..(obj.x0 + bw).min(w) {
                if obj.covers(y, x) {
                    sample.set_pixel(y, x, obj.color, (i + 1) as u8);
                }
            }
        }
    }
    sample
}

/// Sprite scene generated from `seed`; scenes in which any object ends up
/// fully hidden are redrawn.
pub fn gen_sprites_scene(spec: &SceneSpec, seed: u64) -> Result<Sample> {
    if spec.shape_family != ShapeFamily::Sprite {
        return Err(SampError::InvalidArgument("spec is not a sprite spec".into()));
    }
    spec.validate()?;
    let (h, w) = spec.image_size;
    let mut rng = SceneRng::new(seed);
    let k = rng.range_inclusive(spec.n_objects.0, spec.n_objects.1);
    for _ in 0..MAX_ATTEMPTS {
        let colors = pick_colors(spec, &mut rng, k);
        let objects: Vec<SpriteObject> = colors
            .into_iter()
            .map(|color| {
                let shape = SpriteShape::ALL[rng.below(3)];
                let size = rng.range_inclusive(spec.sprite_size.0, spec.sprite_size.1);
                let mut obj = SpriteObject {
                    shape,
                    y0: 0,
                    x0: 0,
                    size,
                    color,
                };
                let (bh, bw) = obj.extent();
                obj.y0 = rng.below(h - bh + 1);
                obj.x0 = rng.below(w - bw + 1);
                obj
            })
            .collect();
        let sample = rasterize_sprites(h, w, spec.background_color, &objects);
        if sample.n_objects() == k {
            return Ok(sample);
        }
    }
    Err(SampError::PlacementFailed { attempts: MAX_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heart_is_symmetric_and_notched() {
        let obj = SpriteObject {
            shape: SpriteShape::Heart,
            y0: 0,
            x0: 0,
            size: 16,
            color: [1.0; 3],
        };
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(obj.covers(y, x), obj.covers(y, 15 - x), "({y},{x})");
            }
        }
        assert!(obj.covers(8, 8));
        assert!(!obj.covers(0, 7) && !obj.covers(0, 8));
        assert!(!obj.covers(15, 0));
    }

    #[test]
    fn ellipse_fills_center_not_corners() {
        let obj = SpriteObject {
            shape: SpriteShape::Ellipse,
            y0: 0,
            x0: 0,
            size: 10,
            color: [1.0; 3],
        };
        assert_eq!(obj.extent(), (6, 10));
        assert!(obj.covers(3, 5));
        assert!(!obj.covers(0, 0) && !obj.covers(5, 9));
    }
}
