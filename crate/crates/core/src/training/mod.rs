//! Teacher forcing, self-critical mixed training and the two-phase schedule.

mod adam;
mod batch;
mod history;
mod loss;
mod pretrain;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;
use crate::qa_scorer::ScorerError;

pub use adam::{global_grad_norm, Adam, AdamConfig, StepInfo};
pub use batch::{EncodedExample, EncodedSet, Example, TrainingBatch};
pub use history::{LogRow, MetricsLog, RowKind, METRICS_HEADER};
pub use loss::{
    check_gamma, loss_mixed, loss_ml, loss_rl, loss_rl_from_rollout, masked_nll, rollout, scalar,
    Generated, Policy, RlItem, Rollout,
};
pub use pretrain::{pretrain_then_finetune, PretrainReport, TwoPhase};
pub use trainer::{
    epoch_order, greedy_bleu, EpochSummary, Objective, TrainConfig, TrainReport, TrainState,
    Trainer,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("empty batch")]
    EmptyBatch,
    #[error("target {index} in the batch is empty")]
    EmptyTarget { index: usize },
    #[error("vocabulary mismatch: model {expected:016x}, data {found:016x}")]
    VocabularyMismatch { expected: u64, found: u64 },
    #[error("non-finite loss at step {step} (loss_ml {loss_ml}, loss_rl {loss_rl:?})")]
    NonFiniteLoss {
        step: usize,
        loss_ml: f64,
        loss_rl: Option<f64>,
    },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("scorer failed: {0}")]
    Scorer(ScorerError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}
