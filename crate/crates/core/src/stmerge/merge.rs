use crate::clustering::dpc_knn;
use crate::counts::cluster_count;
use crate::error::{Error, Result};
use crate::grid::{Provenance, TokenGrid, TokenKind};
use crate::matrix::{mean_of, Matrix};

use super::{MergedTokenSet, SegmentPartition, StaticMask};

/// Dynamic tokens of one frame, kept unchanged by temporal merging.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTokens {
    pub frame: usize,
    pub locations: Vec<usize>,
    pub tokens: Matrix,
}

/// One segment after temporal merging.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTokens {
    pub segment_id: usize,
    pub frames: Vec<usize>,
    /// Static locations, ascending; row `k` of `static_tokens` belongs to
    /// `static_locations[k]`.
    pub static_locations: Vec<usize>,
    /// Temporal mean of each static location over the segment.
    pub static_tokens: Matrix,
    pub dynamic: Vec<FrameTokens>,
}

impl SegmentTokens {
    pub fn token_count(&self) -> usize {
        self.static_locations.len() + self.dynamic.iter().map(|f| f.locations.len()).sum::<usize>()
    }
}

/// Averages static locations over their segment; dynamic tokens pass through
/// frame by frame.
pub fn merge_temporal(
    grid: &TokenGrid,
    partition: &SegmentPartition,
    mask: &StaticMask,
) -> Result<Vec<SegmentTokens>> {
    if mask.segments.len() != partition.len() || partition.n_frames() != grid.frames() {
        return Err(Error::InvalidDimensions(
            "static mask, partition and grid disagree".into(),
        ));
    }
    let c = grid.channels();
    let mut out = Vec::with_capacity(partition.len());
    for (b, seg_mask) in mask.segments.iter().enumerate() {
        if seg_mask.is_static.len() != grid.tokens_per_frame() {
            return Err(Error::InvalidDimensions(format!(
                "mask for segment {b} has {} locations, grid has {}",
                seg_mask.is_static.len(),
                grid.tokens_per_frame()
            )));
        }
        let frames: Vec<usize> = partition.frames_of(b).collect();
        let static_locations = seg_mask.static_locations();
        let dynamic_locations = seg_mask.dynamic_locations();

        let mut static_tokens = Matrix::zeros(0, c);
        for &i in &static_locations {
            static_tokens.push_row(&mean_of(frames.iter().map(|&t| grid.token(t, i)), c));
        }
        let dynamic = if dynamic_locations.is_empty() {
            Vec::new()
        } else {
            frames
                .iter()
                .map(|&t| {
                    let rows: Vec<&[f32]> =
                        dynamic_locations.iter().map(|&i| grid.token(t, i)).collect();
                    FrameTokens {
                        frame: t,
                        locations: dynamic_locations.clone(),
                        tokens: Matrix::from_rows(c, &rows),
                    }
                })
                .collect()
        };
        out.push(SegmentTokens {
            segment_id: b,
            frames,
            static_locations,
            static_tokens,
            dynamic,
        });
    }
    Ok(out)
}

/// Clusters `tokens` into `max(1, round(β·n))` groups; returns one
/// `(mean token, sorted member locations)` per cluster, ordered by the
/// smallest member location.
fn cluster_and_average(
    tokens: &Matrix,
    locations: &[usize],
    beta: f64,
    k_knn: usize,
) -> Result<Vec<(Vec<f32>, Vec<usize>)>> {
    let n = tokens.rows();
    let clusters = dpc_knn(tokens, k_knn, cluster_count(beta, n).min(n))?;
    let mut groups: Vec<(Vec<f32>, Vec<usize>)> = clusters
        .members()
        .into_iter()
        .map(|members| {
            let mean = mean_of(members.iter().map(|&m| tokens.row(m)), tokens.cols());
            let mut locs: Vec<usize> = members.iter().map(|&m| locations[m]).collect();
            locs.sort_unstable();
            (mean, locs)
        })
        .collect();
    groups.sort_by_key(|(_, locs)| locs[0]);
    Ok(groups)
}

/// Spatial merging of one segment.
///
/// Static tokens are clustered once for the whole segment, dynamic tokens
/// separately in every frame. Output order: static clusters, then each
/// frame's dynamic clusters in frame order; clusters within a group by
/// smallest source location.
pub fn merge_spatial(segment: &SegmentTokens, beta: f64, k_knn: usize) -> Result<MergedTokenSet> {
    let c = segment.static_tokens.cols();
    let mut out = MergedTokenSet::empty(c);
    if !segment.static_locations.is_empty() {
        for (token, locs) in
            cluster_and_average(&segment.static_tokens, &segment.static_locations, beta, k_knn)?
        {
            out.push(
                &token,
                Provenance {
                    segment_id: segment.segment_id,
                    source_frames: segment.frames.clone(),
                    source_locations: locs,
                    kind: TokenKind::StaticMerged,
                },
            );
        }
    }
    for frame in &segment.dynamic {
        if frame.locations.is_empty() {
            continue;
        }
        for (token, locs) in cluster_and_average(&frame.tokens, &frame.locations, beta, k_knn)? {
            out.push(
                &token,
                Provenance {
                    segment_id: segment.segment_id,
                    source_frames: vec![frame.frame],
                    source_locations: locs,
                    kind: TokenKind::DynamicMerged,
                },
            );
        }
    }
    Ok(out)
}
