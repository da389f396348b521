//! Tiny transformer encoder with masked-language-model, classification, and
//! tagging heads, plus bit-exact checkpointing.

mod checkpoint;
mod head;
mod inputs;
mod transformer;

pub use checkpoint::{load_checkpoint, save_checkpoint, save_downstream_checkpoint, CheckpointConfig, LoadedModel};
pub use head::{DownstreamModel, Head, HeadConfig, HeadKind, HeadNodes, Pooling};
pub use inputs::{assemble_pair_input, assemble_single_input, EncodedInput};
pub use transformer::{EncodeOutput, FoundationModel, ModelForward, ParamVisitor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("input of length {len} exceeds max_seq_len {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("encoded input must start with [CLS]")]
    MissingCls,
    #[error("segment id {0} out of range")]
    SegmentOutOfRange(u8),
    #[error("input lengths disagree: {0}")]
    LengthMismatch(String),
    #[error("head kind {head:?} cannot serve task {task}")]
    TaskMismatch { head: HeadKind, task: String },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint truncated or malformed: {0}")]
    Truncated(String),
    #[error("vocabulary fingerprint mismatch: checkpoint {expected:#018x}, vocabulary {found:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint config: {0}")]
    Json(#[from] serde_json::Error),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub type_vocab: usize,
}

impl ModelConfig {
    pub fn with_vocab_size(vocab_size: usize) -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_seq_len: 48,
            vocab_size,
            type_vocab: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.max_seq_len == 0 {
            return Err(ModelError::BadConfig(
                "layers, d_ff and max_seq_len must be positive".into(),
            ));
        }
        if self.vocab_size < 6 {
            return Err(ModelError::BadConfig(format!(
                "vocab_size {} leaves no room for word tokens",
                self.vocab_size
            )));
        }
        if self.type_vocab < 2 {
            return Err(ModelError::BadConfig("type_vocab must be >= 2".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
