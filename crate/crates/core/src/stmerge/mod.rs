//! Spatio-temporal token merging.
//!
//! `segment_frames` → `compute_static_mask` → `merge_temporal` →
//! `merge_spatial` (per segment), concatenated in temporal order by
//! [`merge_pipeline`].

mod mask;
mod merge;
mod segment;

use serde::{Deserialize, Serialize};

pub use mask::{compute_static_mask, SegmentMask, StaticMask};
pub use merge::{merge_spatial, merge_temporal, FrameTokens, SegmentTokens};
pub use segment::{frame_features, segment_frames, SegmentPartition};

use crate::config::PruneConfig;
use crate::error::Result;
use crate::grid::{Provenance, TokenGrid};
use crate::matrix::Matrix;

/// Merged visual tokens `X̃_v` with per-token provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTokenSet {
    pub tokens: Matrix,
    pub provenance: Vec<Provenance>,
}

impl MergedTokenSet {
    pub fn empty(channels: usize) -> Self {
        Self {
            tokens: Matrix::zeros(0, channels),
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.tokens.cols()
    }

    pub fn push(&mut self, token: &[f32], provenance: Provenance) {
        self.tokens.push_row(token);
        self.provenance.push(provenance);
    }

    pub fn append(&mut self, other: MergedTokenSet) {
        for (row, p) in other.tokens.iter_rows().zip(other.provenance) {
            self.tokens.push_row(row);
            self.provenance.push(p);
        }
    }

    /// Sum of provenance member counts; equals `T · N_v` for pipeline output.
    pub fn covered_cells(&self) -> usize {
        self.provenance.iter().map(Provenance::n_members).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub segment_id: usize,
    pub frames: [usize; 2],
    pub static_locations: usize,
    pub dynamic_locations: usize,
    /// Fraction of locations marked static.
    pub mask_density: f64,
    pub zero_norm_pairs: usize,
    pub tokens_after_temporal: usize,
    pub static_cluster_sizes: Vec<usize>,
    /// One entry per frame of the segment.
    pub dynamic_cluster_sizes: Vec<Vec<usize>>,
    pub merged_tokens: usize,
}

/// Per-segment counts emitted alongside the merged tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub raw_tokens: usize,
    pub after_temporal: usize,
    pub merged_tokens: usize,
    pub segments: Vec<SegmentTrace>,
}

pub fn merge_pipeline(grid: &TokenGrid, config: &PruneConfig) -> Result<MergedTokenSet> {
    merge_pipeline_traced(grid, config).map(|(m, _)| m)
}

pub fn merge_pipeline_traced(
    grid: &TokenGrid,
    config: &PruneConfig,
) -> Result<(MergedTokenSet, MergeTrace)> {
    config.validate(None)?;
    let partition = segment_frames(grid, config.gamma, config.k_knn)?;
    let mask = compute_static_mask(grid, &partition, config.tau)?;
    let temporal = merge_temporal(grid, &partition, &mask)?;

    let mut merged = MergedTokenSet::empty(grid.channels());
    let mut segments = Vec::with_capacity(temporal.len());
    let mut after_temporal = 0;
    for (seg, seg_mask) in temporal.iter().zip(&mask.segments) {
        let out = merge_spatial(seg, config.beta, config.k_knn)?;
        let n_static = seg.static_locations.len();
        let tokens_after_temporal = seg.token_count();
        after_temporal += tokens_after_temporal;
        segments.push(SegmentTrace {
            segment_id: seg.segment_id,
            frames: partition.segments()[seg.segment_id],
            static_locations: n_static,
            dynamic_locations: grid.tokens_per_frame() - n_static,
            mask_density: n_static as f64 / grid.tokens_per_frame() as f64,
            zero_norm_pairs: seg_mask.zero_norm_pairs,
            tokens_after_temporal,
            static_cluster_sizes: out.cluster_sizes(crate::grid::TokenKind::StaticMerged, None),
            dynamic_cluster_sizes: seg
                .dynamic
                .iter()
                .map(|f| out.cluster_sizes(crate::grid::TokenKind::DynamicMerged, Some(f.frame)))
                .collect(),
            merged_tokens: out.len(),
        });
        merged.append(out);
    }
    let trace = MergeTrace {
        raw_tokens: grid.n_tokens(),
        after_temporal,
        merged_tokens: merged.len(),
        segments,
    };
    Ok((merged, trace))
}

impl MergedTokenSet {
    fn cluster_sizes(&self, kind: crate::grid::TokenKind, frame: Option<usize>) -> Vec<usize> {
        self.provenance
            .iter()
            .filter(|p| p.kind == kind && frame.is_none_or(|f| p.source_frames == [f]))
            .map(|p| p.source_locations.len())
            .collect()
    }
}
