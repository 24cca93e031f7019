use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{vec_mat, Matrix};
use crate::rng::seeded;

use super::attention::attend;
use super::cache::{KvCaches, LayerCache};

const WEIGHT_BOUND: f32 = 0.02;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub layers: usize,
    pub heads: usize,
    /// Model width `C`.
    pub width: usize,
    pub ffn_multiplier: usize,
    pub vocab: usize,
    pub max_seq: usize,
    /// Channel count of incoming visual tokens; a projection to `width` is
    /// inserted when it differs.
    pub visual_channels: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            layers: 12,
            heads: 4,
            width: 64,
            ffn_multiplier: 4,
            vocab: 256,
            max_seq: 4096,
            visual_channels: 64,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn head_dim(&self) -> usize {
        self.width / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDimensions(msg));
        if self.layers < 2 {
            return bad(format!("layers={} must be >= 2", self.layers));
        }
        if self.heads == 0 || self.width == 0 || !self.width.is_multiple_of(self.heads) {
            return bad(format!("width={} must be a positive multiple of heads={}", self.width, self.heads));
        }
        if self.ffn_multiplier == 0 || self.vocab == 0 || self.max_seq == 0 || self.visual_channels == 0 {
            return bad("ffn_multiplier, vocab, max_seq and visual_channels must be >= 1".into());
        }
        Ok(())
    }
}

/// How per-head attention collapses into the single matrix used for ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadReduction {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone)]
struct Block {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    w_up: Matrix,
    w_down: Matrix,
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    embedding: Matrix,
    visual_proj: Option<Matrix>,
    blocks: Vec<Block>,
    lm_head: Matrix,
}

/// Query and attention output of one layer during a decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub query: Vec<f32>,
    pub attention_output: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct PrefillResult {
    /// `L + 1` boundaries: the embedded input, then the output of each layer.
    pub hidden: Vec<Matrix>,
    pub caches: KvCaches,
    /// Head-reduced post-softmax attention `A^(M)`, `n × n`.
    pub attention_at_m: Matrix,
    pub m_layer: usize,
    pub n_visual: usize,
    pub n_question: usize,
    /// Next-token logits at the last position.
    pub logits_last: Vec<f32>,
}

impl PrefillResult {
    pub fn seq_len(&self) -> usize {
        self.n_visual + self.n_question
    }
}

fn layer_norm(x: &[f32]) -> Vec<f32> {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter().map(|&v| ((v as f64 - mean) * inv) as f32).collect()
}

fn gelu(x: f32) -> f32 {
    let x = x as f64;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

/// Sinusoidal encoding: `sin(pos/10000^(2i/C))` on even channels, `cos` on odd.
pub(crate) fn positional_encoding(pos: usize, width: usize) -> Vec<f32> {
    (0..width)
        .map(|c| {
            let i = (c / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * i / width as f64);
            (if c % 2 == 0 { angle.sin() } else { angle.cos() }) as f32
        })
        .collect()
}

impl Model {
    /// Builds a model with seeded `U(-0.02, 0.02)` weights.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded(spec.seed);
        let dist = Uniform::new(-WEIGHT_BOUND, WEIGHT_BOUND).expect("valid bounds");
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(&mut rng)).collect())
        };
        let c = spec.width;
        let f = c * spec.ffn_multiplier;
        let embedding = draw(spec.vocab, c);
        let visual_proj = (spec.visual_channels != c).then(|| draw(spec.visual_channels, c));
        let blocks = (0..spec.layers)
            .map(|_| Block {
                wq: draw(c, c),
                wk: draw(c, c),
                wv: draw(c, c),
                wo: draw(c, c),
                w_up: draw(c, f),
                w_down: draw(f, c),
            })
            .collect();
        let lm_head = draw(c, spec.vocab);
        Ok(Self {
            spec,
            embedding,
            visual_proj,
            blocks,
            lm_head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_layers(&self) -> usize {
        self.spec.layers
    }

    pub fn new_caches(&self) -> KvCaches {
        KvCaches::new(self.spec.layers, self.spec.width)
    }

    /// Raw parameter values, in initialisation order.
    pub fn parameters(&self) -> Vec<&[f32]> {
        let mut out = vec![self.embedding.as_slice()];
        if let Some(p) = &self.visual_proj {
            out.push(p.as_slice());
        }
        for b in &self.blocks {
            for m in [&b.wq, &b.wk, &b.wv, &b.wo, &b.w_up, &b.w_down] {
                out.push(m.as_slice());
            }
        }
        out.push(self.lm_head.as_slice());
        out
    }

    fn embed_visual(&self, token: &[f32], pos: usize) -> Vec<f32> {
        let c = self.spec.width;
        let mut x = match &self.visual_proj {
            Some(p) => {
                let mut out = vec![0.0; c];
                vec_mat(token, p, &mut out);
                out
            }
            None => token.to_vec(),
        };
        for (a, b) in x.iter_mut().zip(positional_encoding(pos, c)) {
            *a += b;
        }
        x
    }

    fn embed_id(&self, id: u32, pos: usize) -> Result<Vec<f32>> {
        if id as usize >= self.spec.vocab {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: self.spec.vocab,
            });
        }
        let mut x = self.embedding.row(id as usize).to_vec();
        for (a, b) in x.iter_mut().zip(positional_encoding(pos, self.spec.width)) {
            *a += b;
        }
        Ok(x)
    }

    /// Embeds visual tokens followed by question ids at positions `0..n`.
    pub fn embed_sequence(&self, visual: &Matrix, question: &[u32]) -> Result<Matrix> {
        if visual.rows() > 0 && visual.cols() != self.spec.visual_channels {
            return Err(Error::InvalidDimensions(format!(
                "visual tokens have {} channels, model expects {}",
                visual.cols(),
                self.spec.visual_channels
            )));
        }
        let n = visual.rows() + question.len();
        if n > self.spec.max_seq {
            return Err(Error::SequenceOverflow {
                len: n,
                max: self.spec.max_seq,
            });
        }
        let mut x = Matrix::zeros(0, self.spec.width);
        for (pos, row) in visual.iter_rows().enumerate() {
            x.push_row(&self.embed_visual(row, pos));
        }
        for (k, &id) in question.iter().enumerate() {
            x.push_row(&self.embed_id(id, visual.rows() + k)?);
        }
        Ok(x)
    }

    /// One block on one row: appends this row's K/V to `cache`, attends over
    /// the whole cache, returns the block output (and the attention details).
    fn block_row(
        &self,
        layer: usize,
        x: &[f32],
        cache: &mut LayerCache,
    ) -> (Vec<f32>, Vec<f32>, super::attention::AttentionOutput) {
        let b = &self.blocks[layer];
        let c = self.spec.width;
        let h = layer_norm(x);
        let (mut q, mut k, mut v) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
        vec_mat(&h, &b.wq, &mut q);
        vec_mat(&h, &b.wk, &mut k);
        vec_mat(&h, &b.wv, &mut v);
        cache.append(&k, &v);
        let att = attend(&q, cache.keys(), cache.values(), self.spec.heads, None);
        let mut proj = vec![0.0; c];
        vec_mat(&att.output, &b.wo, &mut proj);
        let mut y: Vec<f32> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();

        let h2 = layer_norm(&y);
        let mut up = vec![0.0; b.w_up.cols()];
        vec_mat(&h2, &b.w_up, &mut up);
        up.iter_mut().for_each(|u| *u = gelu(*u));
        let mut down = vec![0.0; c];
        vec_mat(&up, &b.w_down, &mut down);
        for (a, d) in y.iter_mut().zip(&down) {
            *a += d;
        }
        (y, q, att)
    }

    /// Runs layers `first..last` (0-based) over a sequence, row by row,
    /// appending to the given caches. Returns the hidden state after each
    /// layer and, if `capture` names one of the layers, its head-reduced
    /// attention matrix.
    pub(crate) fn run_layers(
        &self,
        mut x: Matrix,
        first: usize,
        last: usize,
        caches: &mut [LayerCache],
        capture: Option<(usize, HeadReduction)>,
    ) -> (Vec<Matrix>, Option<Matrix>) {
        let heads = self.spec.heads;
        let mut boundaries = Vec::with_capacity(last - first);
        let mut captured = None;
        for (layer, cache) in caches.iter_mut().enumerate().take(last).skip(first) {
            let start = cache.len();
            let n = x.rows();
            let capture_here = capture.filter(|&(l, _)| l == layer);
            let mut attn = capture_here.map(|_| Matrix::zeros(n, start + n));
            let mut out = Matrix::zeros(0, self.spec.width);
            for i in 0..n {
                let (y, _, att) = self.block_row(layer, x.row(i), cache);
                if let (Some(a), Some((_, red))) = (attn.as_mut(), capture_here) {
                    let keys = start + i + 1;
                    for j in 0..keys {
                        let per_head = (0..heads).map(|hd| att.probs[hd * keys + j]);
                        let v = match red {
                            HeadReduction::Mean => {
                                (per_head.map(|p| p as f64).sum::<f64>() / heads as f64) as f32
                            }
                            HeadReduction::Max => per_head.fold(0.0f32, f32::max),
                        };
                        a.set(i, j, v);
                    }
                }
                out.push_row(&y);
            }
            if attn.is_some() {
                captured = attn;
            }
            boundaries.push(out.clone());
            x = out;
        }
        (boundaries, captured)
    }

    /// Final LayerNorm and output head.
    pub fn logits(&self, hidden: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.spec.vocab];
        vec_mat(&layer_norm(hidden), &self.lm_head, &mut out);
        out
    }

    /// Full prefill over `[visual; question]`, capturing attention at the
    /// 1-based layer `m_layer` (averaged over heads).
    pub fn prefill(&self, visual: &Matrix, question: &[u32], m_layer: usize) -> Result<PrefillResult> {
        self.prefill_with(visual, question, m_layer, HeadReduction::Mean)
    }

    pub fn prefill_with(
        &self,
        visual: &Matrix,
        question: &[u32],
        m_layer: usize,
        reduction: HeadReduction,
    ) -> Result<PrefillResult> {
        let l = self.spec.layers;
        if m_layer == 0 || m_layer > l {
            return Err(Error::InvalidConfig(format!("m_layer={m_layer} must lie in 1..={l}")));
        }
        let n = visual.rows() + question.len();
        if n == 0 {
            return Err(Error::InvalidDimensions("empty prefill sequence".into()));
        }
        let x = self.embed_sequence(visual, question)?;
        let mut caches = self.new_caches();
        let (boundaries, attn) =
            self.run_layers(x.clone(), 0, l, &mut caches.layers, Some((m_layer - 1, reduction)));
        caches.next_position = n;
        let mut hidden = Vec::with_capacity(l + 1);
        hidden.push(x);
        hidden.extend(boundaries);
        let logits_last = self.logits(hidden[l].row(n - 1));
        Ok(PrefillResult {
            hidden,
            caches,
            attention_at_m: attn.expect("capture layer within range"),
            m_layer,
            n_visual: visual.rows(),
            n_question: question.len(),
            logits_last,
        })
    }

    /// Logits at every position of a one-shot forward pass.
    pub fn forward_logits(&self, visual: &Matrix, ids: &[u32]) -> Result<Matrix> {
        let pre = self.prefill(visual, ids, 1)?;
        let last = &pre.hidden[self.spec.layers];
        let rows: Vec<Vec<f32>> = last.iter_rows().map(|r| self.logits(r)).collect();
        Ok(Matrix::from_rows(self.spec.vocab, &rows))
    }

    /// Feeds one token through every layer, appending one K/V row per layer.
    pub fn decode_step(&self, caches: &mut KvCaches, token: u32) -> Result<Vec<f32>> {
        self.decode_inner(caches, token, None)
    }

    /// `decode_step` that also reports each layer's query and attention output.
    pub fn decode_step_traced(
        &self,
        caches: &mut KvCaches,
        token: u32,
    ) -> Result<(Vec<f32>, Vec<LayerTrace>)> {
        let mut trace = Vec::with_capacity(self.spec.layers);
        let logits = self.decode_inner(caches, token, Some(&mut trace))?;
        Ok((logits, trace))
    }

    fn decode_inner(
        &self,
        caches: &mut KvCaches,
        token: u32,
        mut trace: Option<&mut Vec<LayerTrace>>,
    ) -> Result<Vec<f32>> {
        if caches.layers.len() != self.spec.layers {
            return Err(Error::CacheMismatch(caches.layers.iter().map(LayerCache::len).collect()));
        }
        caches.len()?;
        if caches.next_position >= self.spec.max_seq {
            return Err(Error::SequenceOverflow {
                len: caches.next_position + 1,
                max: self.spec.max_seq,
            });
        }
        let mut x = self.embed_id(token, caches.next_position)?;
        for layer in 0..self.spec.layers {
            let (y, q, att) = self.block_row(layer, &x, &mut caches.layers[layer]);
            if let Some(t) = trace.as_deref_mut() {
                t.push(LayerTrace {
                    query: q,
                    attention_output: att.output,
                });
            }
            x = y;
        }
        caches.next_position += 1;
        Ok(self.logits(&x))
    }
}
