//! Tetris-piece scenes without occlusion.

use super::{pick_colors, Sample, SceneRng, SceneSpec, ShapeFamily};
use crate::error::{Result, SampError};

/// One fixed orientation of a tetromino as `(row, col)` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tetromino {
    pub name: &'static str,
    pub cells: [(usize, usize); 4],
}

impl Tetromino {
    /// Extent in cells as `(rows, cols)`.
    pub fn extent(&self) -> (usize, usize) {
        let r = self.cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
        let c = self.cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
        (r, c)
    }
}

const fn t(name: &'static str, cells: [(usize, usize); 4]) -> Tetromino {
    Tetromino { name, cells }
}

/// The 19 fixed orientations of the seven tetrominoes.
pub const TETROMINOES: [Tetromino; 19] = [
    t("I", [(0, 0), (0, 1), (0, 2), (0, 3)]),
    t("I", [(0, 0), (1, 0), (2, 0), (3, 0)]),
    t("O", [(0, 0), (0, 1), (1, 0), (1, 1)]),
    t("T", [(0, 0), (0, 1), (0, 2), (1, 1)]),
    t("T", [(0, 1), (1, 0), (1, 1), (2, 1)]),
    t("T", [(0, 1), (1, 0), (1, 1), (1, 2)]),
    t("T", [(0, 0), (1, 0), (1, 1), (2, 0)]),
    t("S", [(0, 1), (0, 2), (1, 0), (1, 1)]),
    t("S", [(0, 0), (1, 0), (1, 1), (2, 1)]),
    t("Z", [(0, 0), (0, 1), (1, 1), (1, 2)]),
    t("Z", [(0, 1), (1, 0), (1, 1), (2, 0)]),
    t("J", [(0, 1), (1, 1), (2, 0), (2, 1)]),
    t("J", [(0, 0), (1, 0), (1, 1), (1, 2)]),
    t("J", [(0, 0), (0, 1), (1, 0), (2, 0)]),
    t("J", [(0, 0), (0, 1), (0, 2), (1, 2)]),
    t("L", [(0, 0), (1, 0), (2, 0), (2, 1)]),
    t("L", [(0, 0), (0, 1), (0, 2), (1, 0)]),
    t("L", [(0, 0), (0, 1), (1, 1), (2, 1)]),
    t("L", [(0, 2), (1, 0), (1, 1), (1, 2)]),
];

/// Maximum placement attempts per piece.
pub const MAX_ATTEMPTS: usize = 1000;

/// Pixels covered by a piece whose cell grid starts at `(y0, x0)`.
fn piece_pixels(piece: &Tetromino, y0: usize, x0: usize, cell: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    piece.cells.iter().flat_map(move |&(r, c)| {
        (0..cell).flat_map(move |dy| (0..cell).map(move |dx| (y0 + r * cell + dy, x0 + c * cell + dx)))
    })
}

/// Scene of non-overlapping tetrominoes generated from `seed`.
pub fn gen_tetromino_scene(spec: &SceneSpec, seed: u64) -> Result<Sample> {
    if spec.shape_family != ShapeFamily::Tetromino {
        return Err(SampError::InvalidArgument("spec is not a tetromino spec".into()));
    }
    spec.validate()?;
    let (h, w) = spec.image_size;
    let mut rng = SceneRng::new(seed);
    let k = rng.range_inclusive(spec.n_objects.0, spec.n_objects.1);
    let colors = pick_colors(spec, &mut rng, k);
    let mut sample = Sample::blank(h, w, spec.background_color);
    let cell = spec.cell_size;
    for (i, color) in colors.into_iter().enumerate() {
        let label = (i + 1) as u8;
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let piece = &TETROMINOES[rng.below(TETROMINOES.len())];
            let (rows, cols) = piece.extent();
            let (ph, pw) = (rows * cell, cols * cell);
            if ph > h || pw > w {
                continue;
            }
            let y0 = rng.below(h - ph + 1);
            let x0 = rng.below(w - pw + 1);
            if piece_pixels(piece, y0, x0, cell).any(|(y, x)| sample.labels[y * w + x] != 0) {
                continue;
            }
            for (y, x) in piece_pixels(piece, y0, x0, cell) {
                sample.set_pixel(y, x, color, label);
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(SampError::PlacementFailed { attempts: MAX_ATTEMPTS });
        }
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nineteen_distinct_orientations() {
        let mut sets: Vec<Vec<(usize, usize)>> = TETROMINOES
            .iter()
            .map(|t| {
                let mut c = t.cells.to_vec();
                c.sort();
                c
            })
            .collect();
        sets.sort();
        sets.dedup();
        assert_eq!(sets.len(), 19);
        for t in &TETROMINOES {
            // Anchored at the origin and 4-connected.
            assert_eq!(t.cells.iter().map(|c| c.0).min(), Some(0));
            assert_eq!(t.cells.iter().map(|c| c.1).min(), Some(0));
            for a in &t.cells {
                assert!(t.cells.iter().any(|b| a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1));
            }
        }
    }
}
