//! Toy-scale Vision Transformer: tokenization, encoder, attention capture
//! and extraction, checkpoints.

pub mod attention;
pub(crate) mod builder;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod params;

pub use attention::{
    extract, raw_attention, residual_adjusted, rollout, rollout_matrix, AttentionStack, MapSource, PatchAttentionMap,
};
pub use builder::Linear;
pub use config::{ModelConfig, PositionalEncoding};
pub use encoder::{cls_descriptor, Encoder, EncoderOutput, TokenSequence};
pub use params::{Binding, ParamId, ParamStore};
