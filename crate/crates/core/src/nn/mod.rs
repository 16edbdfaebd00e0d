//! Minimal neural-network toolkit shared by the learned modules.

pub mod checkpoint;
pub mod layers;
pub mod params;
pub mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use layers::{
    bce_with_logits, l2_normalize, masked_mean, soft_cross_entropy, Conv1d, Gru, LayerNorm, Linear,
    MultiHeadAttention, TransformerLayer,
};
pub use params::{Init, ParamStore};
pub use train::{batches, grad_norm_clip, Adam};
