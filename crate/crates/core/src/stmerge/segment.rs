use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::clustering::dpc_knn;
use crate::counts::cluster_count;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::matrix::{mean_of, Matrix};

/// Contiguous, sorted, inclusive frame ranges covering `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPartition {
    segments: Vec<[usize; 2]>,
}

impl SegmentPartition {
    pub fn new(segments: Vec<[usize; 2]>, frames: usize) -> Result<Self> {
        let mut next = 0;
        for &[s, e] in &segments {
            if s != next || e < s {
                return Err(Error::InvalidDimensions(format!(
                    "segments {segments:?} are not a contiguous cover of {frames} frames"
                )));
            }
            next = e + 1;
        }
        if next != frames {
            return Err(Error::InvalidDimensions(format!(
                "segments {segments:?} do not cover {frames} frames"
            )));
        }
        Ok(Self { segments })
    }

    /// Maximal runs of equal consecutive labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut segments = Vec::new();
        let mut start = 0;
        for t in 1..=labels.len() {
            if t == labels.len() || labels[t] != labels[start] {
                segments.push([start, t - 1]);
                start = t;
            }
        }
        Self { segments }
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn n_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s[1] + 1)
    }

    pub fn frames_of(&self, segment: usize) -> std::ops::RangeInclusive<usize> {
        let [s, e] = self.segments[segment];
        s..=e
    }
}

/// Mean-pooled feature `f^(t)` of every frame, one row per frame.
pub fn frame_features(grid: &TokenGrid) -> Matrix {
    let c = grid.channels();
    let rows: Vec<Vec<f32>> = (0..grid.frames())
        .map(|t| mean_of((0..grid.tokens_per_frame()).map(|i| grid.token(t, i)), c))
        .collect();
    Matrix::from_rows(c, &rows)
}

/// Clusters frame features into `max(1, round(γ·T))` groups and cuts the
/// label sequence into maximal runs, so the result may hold more segments
/// than clusters when labels interleave.
///
/// The cluster count is capped by the number of distinct frame features;
/// byte-identical frames cannot be told apart and would otherwise be split
/// into arbitrary singleton segments.
pub fn segment_frames(grid: &TokenGrid, gamma: f64, k_knn: usize) -> Result<SegmentPartition> {
    let t = grid.frames();
    if t == 1 {
        return Ok(SegmentPartition { segments: vec![[0, 0]] });
    }
    let features = frame_features(grid);
    let distinct: HashSet<Vec<u32>> = features
        .iter_rows()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    let n_clusters = cluster_count(gamma, t).min(t).min(distinct.len());
    let clusters = dpc_knn(&features, k_knn, n_clusters)?;
    Ok(SegmentPartition::from_labels(&clusters.labels))
}
