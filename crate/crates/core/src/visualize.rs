//! Mapping token scores back onto the original frame grid.
//!
//! A merged token's score is painted onto every `(frame, location)` cell it
//! averages. Rendering produces raw RGB so callers pick the image format.

use crate::error::{Error, Result};
use crate::grid::Provenance;

/// Per-cell values over a `T × N_v` grid, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub scores: Vec<f32>,
    pub selected: Vec<bool>,
}

impl CellMap {
    pub fn score(&self, frame: usize, location: usize) -> f32 {
        self.scores[frame * self.tokens_per_frame + location]
    }

    pub fn is_selected(&self, frame: usize, location: usize) -> bool {
        self.selected[frame * self.tokens_per_frame + location]
    }
}

/// Paints `scores[k]` onto the cells of `provenance[k]`.
///
/// Fails unless every cell is covered exactly once. `selected` holds indices
/// into `provenance`.
pub fn back_project(
    provenance: &[Provenance],
    scores: &[f32],
    selected: &[usize],
    frames: usize,
    tokens_per_frame: usize,
) -> Result<CellMap> {
    if scores.len() != provenance.len() {
        return Err(Error::InvalidDimensions(format!(
            "{} scores for {} merged tokens",
            scores.len(),
            provenance.len()
        )));
    }
    let n = frames * tokens_per_frame;
    let mut cover = vec![0u32; n];
    let mut out = vec![0.0f32; n];
    let mut chosen = vec![false; provenance.len()];
    for &k in selected {
        if k >= provenance.len() {
            return Err(Error::SelectionOutOfRange {
                index: k,
                n_visual: provenance.len(),
            });
        }
        chosen[k] = true;
    }
    let mut sel = vec![false; n];
    for (k, p) in provenance.iter().enumerate() {
        for (t, i) in p.members() {
            if t >= frames || i >= tokens_per_frame {
                return Err(Error::InvalidDimensions(format!(
                    "provenance cell ({t}, {i}) outside {frames}x{tokens_per_frame}"
                )));
            }
            let c = t * tokens_per_frame + i;
            cover[c] += 1;
            out[c] = scores[k];
            sel[c] = chosen[k];
        }
    }
    if let Some(c) = cover.iter().position(|&v| v != 1) {
        return Err(Error::InvalidDimensions(format!(
            "cell ({}, {}) covered {} times",
            c / tokens_per_frame,
            c % tokens_per_frame,
            cover[c]
        )));
    }
    Ok(CellMap {
        frames,
        tokens_per_frame,
        scores: out,
        selected: sel,
    })
}

/// Affine rescale to `[0, 1]`; a constant input maps to all zeros.
pub fn normalize_min_max(values: &[f32]) -> Vec<f32> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / span).collect()
}

/// Rows and columns used to lay out `n` locations of one frame.
pub fn frame_layout(n: usize) -> (usize, usize) {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n {
        (side, side)
    } else {
        let cols = (n as f64).sqrt().ceil() as usize;
        (n.div_ceil(cols), cols)
    }
}

// Five-stop dark-blue → yellow ramp.
const RAMP: [[f32; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn colormap(v: f32) -> [u8; 3] {
    let x = v.clamp(0.0, 1.0) * (RAMP.len() - 1) as f32;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f32;
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = (RAMP[i][c] + f * (RAMP[i + 1][c] - RAMP[i][c])).round() as u8;
    }
    rgb
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub const CELL_PX: usize = 8;
const GAP_PX: usize = 4;

/// Renders `frames` side by side from already-normalized `map` scores.
/// Selected cells get a white outline.
pub fn render_frames(map: &CellMap, frames: &[usize]) -> RgbImage {
    let (rows, cols) = frame_layout(map.tokens_per_frame);
    let tile_w = cols * CELL_PX;
    let width = frames.len() * tile_w + frames.len().saturating_sub(1) * GAP_PX;
    let height = rows * CELL_PX;
    let mut pixels = vec![255u8; width * height * 3];
    for (slot, &t) in frames.iter().enumerate() {
        let x0 = slot * (tile_w + GAP_PX);
        for loc in 0..map.tokens_per_frame {
            let (r, c) = (loc / cols, loc % cols);
            let rgb = colormap(map.score(t, loc));
            let outline = map.is_selected(t, loc);
            for dy in 0..CELL_PX {
                for dx in 0..CELL_PX {
                    let edge = dy == 0 || dx == 0 || dy == CELL_PX - 1 || dx == CELL_PX - 1;
                    let px = if outline && edge { [255, 255, 255] } else { rgb };
                    let at = ((r * CELL_PX + dy) * width + x0 + c * CELL_PX + dx) * 3;
                    pixels[at..at + 3].copy_from_slice(&px);
                }
            }
        }
    }
    RgbImage {
        width,
        height,
        pixels,
    }
}
