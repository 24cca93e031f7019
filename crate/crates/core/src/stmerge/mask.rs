use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::matrix::dot;

use super::SegmentPartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMask {
    /// `s̄_i` per location.
    pub mean_similarity: Vec<f64>,
    /// `s̄_i >= τ`.
    pub is_static: Vec<bool>,
    /// Frame pairs whose cosine was undefined (a zero vector) and counted as 0.
    pub zero_norm_pairs: usize,
}

impl SegmentMask {
    pub fn static_locations(&self) -> Vec<usize> {
        (0..self.is_static.len()).filter(|&i| self.is_static[i]).collect()
    }

    pub fn dynamic_locations(&self) -> Vec<usize> {
        (0..self.is_static.len()).filter(|&i| !self.is_static[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMask {
    pub tau: f64,
    pub segments: Vec<SegmentMask>,
}

impl StaticMask {
    pub fn zero_norm_pairs(&self) -> usize {
        self.segments.iter().map(|s| s.zero_norm_pairs).sum()
    }
}

/// Mean pairwise cosine similarity of each location across the frames of each
/// segment, thresholded at `tau` (inclusive).
///
/// A one-frame segment has no pairs; all its locations count as static with
/// `s̄ = 1`.
pub fn compute_static_mask(
    grid: &TokenGrid,
    partition: &SegmentPartition,
    tau: f64,
) -> Result<StaticMask> {
    if partition.n_frames() != grid.frames() {
        return Err(Error::InvalidDimensions(format!(
            "partition covers {} frames, grid has {}",
            partition.n_frames(),
            grid.frames()
        )));
    }
    let n_v = grid.tokens_per_frame();
    let mut segments = Vec::with_capacity(partition.len());
    for b in 0..partition.len() {
        let frames: Vec<usize> = partition.frames_of(b).collect();
        let mut mean_similarity = vec![1.0f64; n_v];
        let mut zero_norm_pairs = 0;
        if frames.len() > 1 {
            let pairs = frames.len() * (frames.len() - 1) / 2;
            for (i, s_bar) in mean_similarity.iter_mut().enumerate() {
                let norms: Vec<f64> = frames
                    .iter()
                    .map(|&t| {
                        let v = grid.token(t, i);
                        dot(v, v).sqrt()
                    })
                    .collect();
                let mut sum = 0.0f64;
                for a in 0..frames.len() {
                    for b2 in a + 1..frames.len() {
                        let denom = norms[a] * norms[b2];
                        if denom == 0.0 {
                            zero_norm_pairs += 1;
                            continue;
                        }
                        sum += dot(grid.token(frames[a], i), grid.token(frames[b2], i)) / denom;
                    }
                }
                *s_bar = sum / pairs as f64;
            }
        }
        let is_static = mean_similarity.iter().map(|&s| s >= tau).collect();
        segments.push(SegmentMask {
            mean_similarity,
            is_static,
            zero_norm_pairs,
        });
    }
    Ok(StaticMask { tau, segments })
}
