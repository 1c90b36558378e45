//! Evaluation metrics. Scores are kept on a `[0, 1]` scale internally; the
//! report renderers multiply by 100.

mod bleu;
mod qa;
mod report;
mod spearman;

use thiserror::Error;

use crate::qa_scorer::ScorerError;

pub use bleu::{corpus_bleu, self_bleu, sentence_bleu, BleuConfig, MAX_ORDER};
pub use qa::{curiosity_reward, qa_context, qa_source, reward_from_scores};
pub use report::{evaluate_system, EvalConfig, EvalItem, Evaluation, ItemScores, MetricReport};
pub use spearman::{average_ranks, correlation_p_value, spearman};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("n-gram order {0} outside 1..=4")]
    InvalidOrder(usize),
    #[error("no {0} given")]
    Empty(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined for a constant input")]
    ConstantInput,
    #[error("non-finite input value")]
    NonFinite,
    #[error("empty {0}")]
    EmptyText(&'static str),
    #[error("scorer failed on sample {sample}: {source}")]
    Scorer {
        sample: String,
        #[source]
        source: ScorerError,
    },
}
