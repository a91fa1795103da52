//! Structured context-guided compression: anchor scenes, a hash-grid
//! context model driving dynamic quantization and per-dimension Gaussian
//! probabilities, the entropy objective, and the bitstream codec.

mod anchor;
mod codec;
mod grid;
mod model;

pub use anchor::{AnchorSet, FEATURE_DIM_DEFAULT, OFFSETS_DEFAULT, SCALING_DIM};
pub use codec::{decode, encode, quantize_state, SccState, SizeReport, MAGIC, VERSION};
pub use grid::{GridLevel, HashGrid};
pub use model::{
    anchor_context, anchors_to_gaussians, anchors_to_scene, decode_anchor, entropy_loss,
    entropy_loss_f64, feature_probability, quant_step_from_raw, quantize_infer, quantize_train,
    scc_loss, volume_loss, AnchorContext, AttrGroup, ContextModel, ContextOut, GaussianDecoder,
    SccWeights, ETA_DEFAULT, LAMBDA_ENTROPY_DEFAULT, LAMBDA_VOL_DEFAULT, TAU_DEFAULT,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SccError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic: not a BLMS container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated container")]
    Truncated,
    #[error("quantized symbol out of range at anchor {anchor}, dimension {dim} (value {value})")]
    SymbolOutOfRange { anchor: usize, dim: usize, value: f64 },
    #[error("malformed container: {0}")]
    Malformed(String),
}
