//! Conditioning kernels with exact forward and backward passes.
//!
//! - [`embed`]: class/attribute embedding lookups and contextualized-embedding
//!   broadcast onto the label map.
//! - [`norm`]: the S-block `y = BN(x) ⊙ (1 + γ) + β` and the S_avg-block
//!   `y = BN(x) ⊙ (1 + γ + γ_avg) + β + β_avg`, with γ/β from a
//!   conv3x3-ReLU-conv3x3 path over the conditioning map.
//! - [`attention`]: sentence-semantic attention with one learned query per
//!   class and head.
//! - [`toy`]: two stacked S-blocks and a 1x1 RGB projection, enough to route
//!   gradients end to end.
//!
//! All tensors are `f64`. Conditioning maps are channel-last `[H, W, K]`;
//! activations are channel-first `[N, C, H, W]`.

pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod embed;
pub mod norm;
pub mod schedule;
pub mod tokens;
pub mod toy;

use thiserror::Error;

use crate::tensor::ShapeError;

pub use attention::{
    attention_backward, attention_forward, AttentionCache, AttentionGrads, AttentionOutput,
    AttentionWeights, HEAD_SIZE,
};
pub use embed::{apply_contextualized, attribute_embed, class_embed, EMBED_DIM};
pub use norm::{
    s_avg_block_backward, s_avg_block_forward, s_block_backward, s_block_forward, SAvgBlockCache,
    SAvgBlockGrads, SBlockCache, SBlockGrads, SBlockWeights, BN_EPS,
};
pub use schedule::alpha_loss_weight;
pub use tokens::{concat_captions, pseudo_encode, LayerTag, TokenEmbeddings};
pub use toy::{toy_backward, toy_forward, StyleInput, ToyCache, ToyConfig, ToyGrads, ToyWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("class id {id} out of range for a table of {rows} rows")]
    ClassOutOfRange { id: u32, rows: usize },
    #[error("attribute id {id} out of range for a table of {rows} rows")]
    AttributeOutOfRange { id: u32, rows: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("format: {0}")]
    Format(String),
}
