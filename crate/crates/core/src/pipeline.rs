//! End-to-end processing of one video: merge, prefill, select, compress.

use rand::Rng;

use crate::config::PruneConfig;
use crate::error::Result;
use crate::grid::TokenGrid;
use crate::metrics::EfficiencyReport;
use crate::rng::{derive_seed, seeded};
use crate::select::{
    compress_and_continue, extract_qv_attention, score_visual_tokens, select_top_alpha,
    CompressedPrefill, SelectionSet,
};
use crate::stmerge::{merge_pipeline_traced, MergeTrace, MergedTokenSet};
use crate::tinyllm::{Model, ModelSpec, PrefillResult};

pub const QUESTION_LEN: usize = 16;

/// Seed stream reserved for question ids, kept apart from per-video streams.
const QUESTION_STREAM: u64 = 0x5155_4553;

/// Uniform token ids in `[0, vocab)`.
pub fn synthetic_question(seed: u64, len: usize, vocab: usize) -> Vec<u32> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.random_range(0..vocab as u32)).collect()
}

/// The question paired with the `index`-th video of a run.
pub fn question_for_video(seed: u64, index: usize, vocab: usize) -> Vec<u32> {
    let stream = derive_seed(seed ^ QUESTION_STREAM, index as u64);
    synthetic_question(stream, QUESTION_LEN, vocab)
}

/// The default model, with the visual projection sized to `channels`.
pub fn default_model_spec(channels: usize, seed: u64) -> ModelSpec {
    ModelSpec {
        visual_channels: channels,
        seed,
        ..ModelSpec::default()
    }
}

#[derive(Debug, Clone)]
pub struct VideoOutcome {
    pub report: EfficiencyReport,
    pub merged: MergedTokenSet,
    pub trace: MergeTrace,
    pub selection: SelectionSet,
    pub prefill: PrefillResult,
    pub compressed: CompressedPrefill,
}

/// Everything that does not depend on `alpha`: merging and the full prefill.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw_tokens: usize,
    pub merged: MergedTokenSet,
    pub trace: MergeTrace,
    pub prefill: PrefillResult,
}

pub fn prepare(
    grid: &TokenGrid,
    question: &[u32],
    model: &Model,
    config: &PruneConfig,
) -> Result<Prepared> {
    config.validate(Some(model.n_layers()))?;
    let (merged, trace) = merge_pipeline_traced(grid, config)?;
    let prefill = model.prefill(&merged.tokens, question, config.m_layer)?;
    Ok(Prepared {
        raw_tokens: grid.n_tokens(),
        merged,
        trace,
        prefill,
    })
}

/// Scores, selects the top `alpha` fraction and compresses the caches.
pub fn select_and_compress(
    prepared: &Prepared,
    model: &Model,
    alpha: f64,
) -> Result<(SelectionSet, CompressedPrefill, EfficiencyReport)> {
    let prefill = &prepared.prefill;
    let a_qv = extract_qv_attention(&prefill.attention_at_m, prefill.n_visual)?;
    let scores = score_visual_tokens(&a_qv)?;
    let selection = select_top_alpha(&scores, alpha)?;
    let compressed = compress_and_continue(model, prefill, &selection, prefill.m_layer)?;
    let spec = model.spec();
    let report = EfficiencyReport::new(
        spec.layers,
        prefill.m_layer,
        spec.width,
        prefill.n_question,
        prepared.raw_tokens,
        prepared.trace.after_temporal,
        prepared.merged.len(),
        selection.indices.len(),
        prepared.trace.segments.len(),
    );
    Ok((selection, compressed, report))
}

pub fn run_video(
    grid: &TokenGrid,
    question: &[u32],
    model: &Model,
    config: &PruneConfig,
) -> Result<VideoOutcome> {
    let prepared = prepare(grid, question, model, config)?;
    let (selection, compressed, report) = select_and_compress(&prepared, model, config.alpha)?;
    Ok(VideoOutcome {
        report,
        merged: prepared.merged,
        trace: prepared.trace,
        selection,
        prefill: prepared.prefill,
        compressed,
    })
}
