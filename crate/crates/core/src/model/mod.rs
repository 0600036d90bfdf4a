//! Phoneme-level encoder-decoder transformer with a single shared embedding
//! table, an order-free positional code for tags, and representation
//! extraction for the probes.

mod checkpoint;
mod config;
mod train;
mod transformer;
mod vocab;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::numerics::NumericsError;

pub use checkpoint::{Checkpoint, TrainingMetadata};
pub use config::{ModelConfig, Preset, Regime, TrainParams};
pub use train::{exact_match, greedy_decode, greedy_decode_batch, train, Decoded, TrainReport};
pub use transformer::{sinusoid, ParamLayout, Transformer, TAG_POSITION};
pub use vocab::{Vocabulary, BOS, COPY, EOS, PAD, SPECIALS, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("symbol {0:?} is not in the vocabulary")]
    Vocabulary(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
