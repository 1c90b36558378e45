//! `QA_prob(q, text)`: the probability a QA backend assigns to its own
//! retrieved answer.
//!
//! Two backends implement [`QaScorer`]: [`StubScorer`], a deterministic
//! content-word overlap scorer that needs no model, and [`RemoteScorer`], an
//! HTTP client for an extractive QA service. [`serve_stub`] runs the stub
//! behind the same wire protocol for loopback testing.

mod remote;
mod server;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::CharSpan;

pub use remote::{RemoteConfig, RemoteScorer};
pub use server::{serve_stub, StubServer};
pub use stub::{content_words, StubScorer, STOPWORDS};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScorerError {
    #[error("empty question")]
    EmptyQuestion,
    #[error("empty batch")]
    EmptyBatch,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out after {0} ms")]
    Timeout(u64),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// A scorer's verdict for one (question, context) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaScore {
    pub probability: f64,
    pub answer_text: String,
    pub answer_span: Option<CharSpan>,
}

impl QaScore {
    pub fn no_answer() -> Self {
        Self {
            probability: 0.0,
            answer_text: String::new(),
            answer_span: None,
        }
    }
}

pub type BatchScores = Vec<Result<QaScore, ScorerError>>;

/// Implementations must tolerate concurrent calls.
pub trait QaScorer: Send + Sync {
    fn score(&self, question: &str, context: &str) -> Result<QaScore, ScorerError>;

    /// Element `i` answers `items[i]`. Failures are reported per item; only an
    /// empty batch fails as a whole.
    fn score_batch(&self, items: &[(String, String)]) -> Result<BatchScores, ScorerError> {
        if items.is_empty() {
            return Err(ScorerError::EmptyBatch);
        }
        Ok(items.iter().map(|(q, c)| self.score(q, c)).collect())
    }
}

impl<T: QaScorer + ?Sized> QaScorer for &T {
    fn score(&self, question: &str, context: &str) -> Result<QaScore, ScorerError> {
        (**self).score(question, context)
    }

    fn score_batch(&self, items: &[(String, String)]) -> Result<BatchScores, ScorerError> {
        (**self).score_batch(items)
    }
}

impl<T: QaScorer + ?Sized> QaScorer for Box<T> {
    fn score(&self, question: &str, context: &str) -> Result<QaScore, ScorerError> {
        (**self).score(question, context)
    }

    fn score_batch(&self, items: &[(String, String)]) -> Result<BatchScores, ScorerError> {
        (**self).score_batch(items)
    }
}

/// Span-based backends: confidence of the argmax span is the product of its
/// start and end probabilities.
pub fn span_probability(start_probability: f64, end_probability: f64) -> f64 {
    (start_probability * end_probability).clamp(0.0, 1.0)
}

/// JSON bodies of the scoring protocol.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreRequest {
        pub question: String,
        pub context: String,
    }

    /// `start`/`end` are code-point offsets into the context; an empty
    /// `answer` means nothing was retrieved.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreResponse {
        pub probability: f64,
        pub answer: String,
        pub start: i64,
        pub end: i64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct BatchRequest {
        pub items: Vec<ScoreRequest>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct BatchResponse {
        pub results: Vec<ScoreResponse>,
    }
}
