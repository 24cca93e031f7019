//! Visual token pruning for video language models.
//!
//! The pipeline has two halves. Before the language model sees anything,
//! per-frame visual tokens are merged: frames are grouped into temporal
//! segments, locations that stay put within a segment are averaged over time,
//! and the survivors are clustered spatially ([`stmerge`]). Inside the model,
//! question-to-visual attention at an intermediate layer ranks the merged
//! tokens, only the top fraction is kept for the remaining layers, and the
//! KV caches of the earlier layers are row-filtered to match ([`select`]).
//!
//! [`tinyllm`] is a small, fully specified decoder-only transformer used as
//! the language model stand-in. [`synth`] generates token grids with planted
//! ground truth and [`metrics`] does token and FLOPs accounting.

pub mod clustering;
pub mod config;
pub mod counts;
pub mod error;
pub mod grid;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod stmerge;
pub mod synth;
pub mod tinyllm;
pub mod visualize;

pub use clustering::{dpc_knn, ClusterResult};
pub use config::PruneConfig;
pub use error::{Error, Result};
pub use grid::{load_token_grid, save_token_grid, Provenance, TokenGrid, TokenKind};
pub use matrix::Matrix;
pub use metrics::{flops_estimate, retained_ratio, EfficiencyReport, FlopsEstimate};
pub use select::{
    compress_and_continue, extract_qv_attention, score_visual_tokens, select_top_alpha,
    CompressedPrefill, SelectionSet,
};
pub use stmerge::{
    compute_static_mask, merge_pipeline, merge_pipeline_traced, merge_spatial, merge_temporal,
    segment_frames, MergeTrace, MergedTokenSet, SegmentPartition, StaticMask,
};
pub use synth::{GroundTruth, SynthSpec, SynthVideo};
pub use tinyllm::{KvCaches, LayerCache, Model, ModelSpec, PrefillResult};
