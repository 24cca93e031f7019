//! A small decoder-only transformer used as the language model stand-in.
//!
//! Pre-norm blocks (parameter-free LayerNorm, multi-head causal attention,
//! GELU feed-forward of width `ffn_multiplier · C`), sinusoidal absolute
//! positions added at the input, untied output head. Weights are drawn from
//! `U(-0.02, 0.02)` with a seeded xoshiro256++ stream; there is no training.
//!
//! Every layer processes one row at a time against its KV cache, so prefill,
//! continued prefill on a pruned sequence and single-token decoding all run
//! the same arithmetic in the same order.

mod attention;
mod cache;
mod model;

pub use attention::{attend, AttentionOutput};
pub use cache::{KvCaches, LayerCache};
pub use model::{HeadReduction, LayerTrace, Model, ModelSpec, PrefillResult};
