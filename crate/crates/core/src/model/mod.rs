//! Deterministic toy transformer: pre-norm blocks, rotary attention, SiLU MLP.

mod config;
mod forward;
mod io;
mod ops;
pub mod tokenizer;
mod weights;

pub use config::ModelConfig;
pub use forward::{
    attention_flops, decode, full_prefill, partial_recompute_attention, AttentionMap, KvState, LayerKv, Layout,
    PartialOutput, Prefill, ScoreCapture, ScoreRow, TokenSequence,
};
pub(crate) use forward::{check_tokens, decode_captured, embed, logits_for, recompute_layer};
pub use io::{load_weights, save_weights};
pub use ops::{apply_rotary, argmax};
pub use weights::{init_model, LayerWeights, Weights};

pub type TokenId = u32;
