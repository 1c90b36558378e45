//! Copy-augmented Transformer question generator and its decoders.

mod checkpoint;
mod config;
pub mod decode;
mod params;
mod transformer;
pub mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, Precision};
pub use decode::{DecodeMode, GenerationResult, Hypothesis, StepDistribution};
pub use params::ParamStore;
pub use transformer::{BoundSource, CopyTransformer};
pub use vocab::{SourceEncoding, Vocabulary};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{what} id {id} outside [0, {limit})")]
    IdOutOfRange {
        what: &'static str,
        id: u32,
        limit: usize,
    },
    #[error("{what} length {len} outside 1..={max}")]
    BadLength {
        what: &'static str,
        len: usize,
        max: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("beam size must be at least 1")]
    InvalidBeam,
    #[error("decoding failed: {0}")]
    Decode(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

#[cfg(test)]
mod tests;
