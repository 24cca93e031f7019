//! Attention-guided selection of merged visual tokens and KV-cache
//! compression.
//!
//! The sequence is laid out visual-first: rows `0..N_v'` are visual tokens,
//! rows `N_v'..N_v'+N_q` the question. At layer `M` the question-to-visual
//! block of the attention matrix is max-pooled over question rows, the top
//! `⌈α·N_v'⌉` visual tokens are kept, and
//!
//! * layers `1..=M` keep their cached K/V rows for the kept visual tokens and
//!   every question token (row copies, no recomputation);
//! * layers `M+1..=L` are re-run on the reduced sequence starting from the
//!   layer-`M` hidden states, which produces their caches.
//!
//! Kept tokens keep their original positions; nothing is re-indexed.

use serde::{Deserialize, Serialize};

use crate::counts::ceil_count;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tinyllm::{KvCaches, LayerCache, Model, PrefillResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSet {
    /// Kept visual token indices, ascending.
    pub indices: Vec<usize>,
    /// `a_v` for every merged visual token.
    pub scores: Vec<f32>,
    pub alpha: f64,
    pub keep_count: usize,
}

impl SelectionSet {
    pub fn n_visual(&self) -> usize {
        self.scores.len()
    }

    /// Membership mask over all visual tokens.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.scores.len()];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }
}

/// `A[N_v':, :N_v']`: attention from question rows to visual columns.
pub fn extract_qv_attention(attention: &Matrix, n_visual: usize) -> Result<Matrix> {
    let n = attention.rows();
    if attention.cols() != n || n_visual > n {
        return Err(Error::InvalidDimensions(format!(
            "attention is {}x{}, n_visual={n_visual}",
            attention.rows(),
            attention.cols()
        )));
    }
    let rows: Vec<&[f32]> = (n_visual..n).map(|i| &attention.row(i)[..n_visual]).collect();
    Ok(Matrix::from_rows(n_visual, &rows))
}

/// Column-wise max over question rows.
pub fn score_visual_tokens(a_qv: &Matrix) -> Result<Vec<f32>> {
    if a_qv.rows() == 0 || a_qv.cols() == 0 {
        return Err(Error::EmptyScores);
    }
    let mut scores = a_qv.row(0).to_vec();
    for row in a_qv.iter_rows().skip(1) {
        for (s, &v) in scores.iter_mut().zip(row) {
            *s = s.max(v);
        }
    }
    Ok(scores)
}

/// Keeps the `⌈α·N⌉` highest scores; equal scores go to the lower index.
pub fn select_top_alpha(scores: &[f32], alpha: f64) -> Result<SelectionSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha={alpha} must lie in (0, 1]")));
    }
    let keep_count = ceil_count(alpha, scores.len()).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut indices = order[..keep_count].to_vec();
    indices.sort_unstable();
    Ok(SelectionSet {
        indices,
        scores: scores.to_vec(),
        alpha,
        keep_count,
    })
}

/// State after pruning at layer `M` and finishing the prefill.
#[derive(Debug, Clone)]
pub struct CompressedPrefill {
    pub caches: KvCaches,
    /// Original sequence positions of the kept rows: selected visual indices,
    /// then every question position.
    pub kept_positions: Vec<usize>,
    /// Output of the last layer on the reduced sequence.
    pub final_hidden: Matrix,
    pub logits_last: Vec<f32>,
}

fn check_selection(selection: &SelectionSet, n_visual: usize) -> Result<()> {
    for (k, &i) in selection.indices.iter().enumerate() {
        if i >= n_visual {
            return Err(Error::SelectionOutOfRange { index: i, n_visual });
        }
        if k > 0 && selection.indices[k - 1] >= i {
            return Err(Error::InvalidDimensions(
                "selection indices must be strictly ascending".into(),
            ));
        }
    }
    Ok(())
}

/// Row-filters the caches of layers `1..=m_layer`: selected visual rows,
/// then the question rows.
pub fn compress_caches(
    caches: &KvCaches,
    selection: &SelectionSet,
    n_visual: usize,
    n_question: usize,
    m_layer: usize,
) -> Result<Vec<LayerCache>> {
    check_selection(selection, n_visual)?;
    let rows: Vec<usize> = selection
        .indices
        .iter()
        .copied()
        .chain(n_visual..n_visual + n_question)
        .collect();
    Ok(caches.layers[..m_layer]
        .iter()
        .map(|c| c.select_rows(&rows))
        .collect())
}

pub fn compress_and_continue(
    model: &Model,
    prefill: &PrefillResult,
    selection: &SelectionSet,
    m_layer: usize,
) -> Result<CompressedPrefill> {
    if m_layer != prefill.m_layer {
        return Err(Error::InvalidConfig(format!(
            "prefill captured layer {} but compression asked for {m_layer}",
            prefill.m_layer
        )));
    }
    let l = model.n_layers();
    if m_layer == 0 || m_layer > l {
        return Err(Error::InvalidConfig(format!("m_layer={m_layer} must lie in 1..={l}")));
    }
    let (n_visual, n_question) = (prefill.n_visual, prefill.n_question);
    let width = model.spec().width;

    let mut layers = compress_caches(&prefill.caches, selection, n_visual, n_question, m_layer)?;
    let kept_positions: Vec<usize> = selection
        .indices
        .iter()
        .copied()
        .chain(n_visual..n_visual + n_question)
        .collect();
    let reduced = prefill.hidden[m_layer].select_rows(&kept_positions);

    layers.extend((m_layer..l).map(|_| LayerCache::new(width)));
    let (boundaries, _) = model.run_layers(reduced.clone(), m_layer, l, &mut layers, None);
    let final_hidden = boundaries.into_iter().last().unwrap_or(reduced);
    let logits_last = match final_hidden.rows() {
        0 => Vec::new(),
        n => model.logits(final_hidden.row(n - 1)),
    };
    Ok(CompressedPrefill {
        caches: KvCaches {
            layers,
            next_position: prefill.seq_len(),
        },
        kept_positions,
        final_hidden,
        logits_last,
    })
}
