//! Feature projection, the asymmetric cross-attention streams and the
//! classification heads.

pub mod attention;
pub mod checkpoint;
pub mod model;

pub use attention::{
    attention_head, av_attention, multi_head, multi_head_values, va_attention, AttentionParams,
    AttentionVars, HeadVars, MultiHeadOutput,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use model::{ForwardTrace, FusionModel, FusionParams, Modality, ModelConfig};
