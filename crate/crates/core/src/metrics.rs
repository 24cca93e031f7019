//! Token-count and analytic FLOPs accounting.
//!
//! Per-layer cost of a length-`n` sequence at width `C`:
//! `4nC²` (Q, K, V, O projections) `+ 2n²C` (scores and weighted values)
//! `+ 16nC²` (feed-forward at 4× width). The unpruned model pays it for
//! `N_q + T·N_v` tokens on all `L` layers; the pruned one pays it for
//! `N_q + N_v'` tokens on the first `M` layers and `N_q + |S|` on the rest.

use serde::{Deserialize, Serialize};

pub const COST_MODEL: &str = "per-layer cost(n) = 4nC^2 + 2n^2C + 16nC^2; \
baseline = L*cost(Nq + raw); pruned = M*cost(Nq + merged) + (L-M)*cost(Nq + selected)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsInputs {
    pub layers: usize,
    pub m_layer: usize,
    pub width: usize,
    pub n_question: usize,
    pub raw: usize,
    pub merged: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsEstimate {
    pub baseline: f64,
    pub pruned: f64,
    pub multiplier: f64,
}

pub fn layer_cost(n: usize, width: usize) -> f64 {
    let (n, c) = (n as f64, width as f64);
    4.0 * n * c * c + 2.0 * n * n * c + 16.0 * n * c * c
}

pub fn flops_estimate(inp: &FlopsInputs) -> FlopsEstimate {
    let l = inp.layers as f64;
    let m = inp.m_layer.min(inp.layers) as f64;
    let baseline = l * layer_cost(inp.n_question + inp.raw, inp.width);
    let pruned = m * layer_cost(inp.n_question + inp.merged, inp.width)
        + (l - m) * layer_cost(inp.n_question + inp.selected, inp.width);
    FlopsEstimate {
        baseline,
        pruned,
        multiplier: if baseline > 0.0 { pruned / baseline } else { 1.0 },
    }
}

/// `|S| / (T·N_v)`.
pub fn retained_ratio(selected: usize, raw: usize) -> f64 {
    if raw == 0 {
        0.0
    } else {
        selected as f64 / raw as f64
    }
}

/// Efficiency accounting for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub raw_tokens: usize,
    /// Tokens left after temporal averaging, before spatial clustering.
    pub after_temporal: usize,
    pub merged_tokens: usize,
    pub selected_tokens: usize,
    pub question_tokens: usize,
    pub segments: usize,
    pub merged_ratio: f64,
    pub retained_ratio: f64,
    pub flops_baseline: f64,
    pub flops_pruned: f64,
    pub flops_multiplier: f64,
    /// Decoding cache length per layer after compression.
    pub cache_len: usize,
}

impl EfficiencyReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layers: usize,
        m_layer: usize,
        width: usize,
        question_tokens: usize,
        raw_tokens: usize,
        after_temporal: usize,
        merged_tokens: usize,
        selected_tokens: usize,
        segments: usize,
    ) -> Self {
        let flops = flops_estimate(&FlopsInputs {
            layers,
            m_layer,
            width,
            n_question: question_tokens,
            raw: raw_tokens,
            merged: merged_tokens,
            selected: selected_tokens,
        });
        Self {
            raw_tokens,
            after_temporal,
            merged_tokens,
            selected_tokens,
            question_tokens,
            segments,
            merged_ratio: retained_ratio(merged_tokens, raw_tokens),
            retained_ratio: retained_ratio(selected_tokens, raw_tokens),
            flops_baseline: flops.baseline,
            flops_pruned: flops.pruned,
            flops_multiplier: flops.multiplier,
            cache_len: selected_tokens + question_tokens,
        }
    }

    pub fn counts_consistent(&self) -> bool {
        self.selected_tokens <= self.merged_tokens
            && self.merged_tokens <= self.after_temporal
            && self.after_temporal <= self.raw_tokens
    }

    pub const CSV_HEADER: &'static str = "raw_tokens,after_temporal,merged_tokens,selected_tokens,question_tokens,segments,merged_ratio,retained_ratio,flops_baseline,flops_pruned,flops_multiplier,cache_len";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.raw_tokens,
            self.after_temporal,
            self.merged_tokens,
            self.selected_tokens,
            self.question_tokens,
            self.segments,
            self.merged_ratio,
            self.retained_ratio,
            self.flops_baseline,
            self.flops_pruned,
            self.flops_multiplier,
            self.cache_len
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(merged: usize, selected: usize, m: usize) -> FlopsInputs {
        FlopsInputs { layers: 12, m_layer: m, width: 64, n_question: 16, raw: 1024, merged, selected }
    }

    #[test]
    fn no_pruning_is_unit_multiplier() {
        assert_eq!(flops_estimate(&inputs(1024, 1024, 10)).multiplier, 1.0);
    }

    #[test]
    fn question_only_floor() {
        let f = flops_estimate(&inputs(0, 0, 0));
        let floor = layer_cost(16, 64) / layer_cost(16 + 1024, 64);
        assert!((f.multiplier - floor).abs() < 1e-15);
        assert!(f.multiplier > 0.0 && f.multiplier < 0.02);
    }

    #[test]
    fn cost_formula_by_hand() {
        // n = 2, C = 3: 4*2*9 + 2*4*3 + 16*2*9 = 72 + 24 + 288.
        assert_eq!(layer_cost(2, 3), 384.0);
    }

    #[test]
    fn retained_ratio_arithmetic() {
        assert!((retained_ratio(166, 1024) - 0.162).abs() < 5e-4);
        assert_eq!(retained_ratio(1024, 1024), 1.0);
    }

    #[test]
    fn report_fields() {
        let r = EfficiencyReport::new(12, 10, 64, 16, 1024, 600, 320, 128, 4);
        assert_eq!(r.cache_len, 144);
        assert_eq!(r.retained_ratio, 0.125);
        assert!(r.counts_consistent());
        assert_eq!(r.csv_row().split(',').count(), EfficiencyReport::CSV_HEADER.split(',').count());
    }

    proptest! {
        #[test]
        fn multiplier_is_monotone(raw in 1usize..2048, a in 0.0f64..1.0, b in 0.0f64..1.0, m in 0usize..11, d in 1usize..50) {
            let merged = (a * raw as f64) as usize;
            let selected = (b * merged as f64) as usize;
            let f = |merged, selected, m| flops_estimate(&FlopsInputs {
                layers: 12, m_layer: m, width: 64, n_question: 16, raw, merged, selected,
            }).multiplier;
            let base = f(merged, selected, m);
            prop_assert!(base > 0.0 && base <= 1.0 + 1e-12);
            prop_assert!(f(merged + d, selected, m) >= base);
            prop_assert!(f(merged, (selected + d).min(merged), m) >= base);
            prop_assert!(f(merged, selected, m + 1) >= base);
        }
    }
}
