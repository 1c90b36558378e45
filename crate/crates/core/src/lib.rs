//! Curiosity-driven question generation.
//!
//! A curiosity-driven question is relevant to a source text while its answer is
//! deliberately absent from it, but present in the surrounding paragraph. This
//! crate covers the whole pipeline around that task:
//!
//! - [`corpus`]: ingest standard and conversational QA files into a canonical
//!   schema with sentence segmentation and answer-sentence localization.
//! - [`derivation`]: build `{source, context, target}` triplets under the
//!   conversational (`x < a`) or standard (`x != a`, optionally entity
//!   constrained) regimes, and split corpora by article.
//! - [`metrics`]: BLEU, Self-BLEU, the QA answerability metrics, the balanced
//!   curiosity reward and Spearman correlation.
//! - [`qa_scorer`]: the QA probability backend, as a deterministic offline stub
//!   or an HTTP client (plus a loopback stub server speaking the same protocol).
//! - [`model`]: a copy-augmented Transformer encoder-decoder with greedy, beam
//!   and sampling decoders.
//! - [`training`]: teacher forcing, mixed teacher forcing + self-critical
//!   REINFORCE, and the pretrain-then-finetune schedule.
//! - [`analysis`]: first-token histograms, degenerate-prefix rates, beam
//!   divergence tables and metric/human-rating correlation matrices.

pub mod analysis;
pub mod corpus;
pub mod derivation;
pub mod metrics;
pub mod model;
pub mod qa_scorer;
pub mod text;
pub mod training;

pub use text::CharSpan;

/// Version tag written next to every artifact the pipeline produces.
pub const SCHEMA_VERSION: &str = "cqg/1";
