//! Curiosity triplets `{source, context, target}` derived from QA corpora.
//!
//! For a question `q` whose answer lies in sentence `s_a` of paragraph `P`:
//! the target is `q`, the context `P'` is `P` without `s_a`, and the source
//! is either every sentence before `s_a` (conversational data, `x < a`) or
//! any single other sentence (standard data, `x != a`), optionally filtered
//! so that every entity of `q` also occurs in the source.

pub mod entities;
mod split;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, Corpus, Origin, Paragraph};

pub use entities::{extract_entities, Entity, EntityLabel, EntityTagger, HeuristicTagger};
pub use split::make_article_split;
pub use stats::{DerivationStats, SplitTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DerivationError {
    #[error("expected a {expected:?} corpus, got {actual:?}")]
    WrongOrigin { expected: Origin, actual: Origin },
    #[error("paragraph has a single sentence; stripped context would be empty")]
    EmptyContext,
    #[error("sentence index {index} out of range for {len} sentences")]
    SentenceOutOfRange { index: usize, len: usize },
    #[error("cannot hold out {requested} of {available} articles")]
    SplitTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Conversational,
    Unconstrained,
    NerConstrained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletMeta {
    pub article_id: String,
    pub paragraph_index: usize,
    pub source_sentence_indices: Vec<usize>,
    pub answer_sentence_index: usize,
    pub constraint_mode: ConstraintMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuriosityTriplet {
    pub source: String,
    pub context: String,
    pub target: String,
    pub meta: TripletMeta,
}

/// Triplets plus the counts of everything that was skipped or filtered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Derivation {
    pub triplets: Vec<CuriosityTriplet>,
    pub questions: usize,
    /// Conversational questions answered in the first sentence (empty source).
    pub skipped_first_sentence: usize,
    /// Questions in single-sentence paragraphs (empty P').
    pub skipped_empty_context: usize,
    /// Candidate (question, source) pairs removed by the entity constraint.
    pub filtered_by_entities: usize,
}

impl Derivation {
    fn merge(mut self, other: Derivation) -> Derivation {
        self.triplets.extend(other.triplets);
        self.questions += other.questions;
        self.skipped_first_sentence += other.skipped_first_sentence;
        self.skipped_empty_context += other.skipped_empty_context;
        self.filtered_by_entities += other.filtered_by_entities;
        self
    }
}

/// `P'`: every sentence except `s_a`, in order, joined with single spaces.
pub fn build_stripped_context(
    paragraph: &Paragraph,
    answer_index: usize,
) -> Result<String, DerivationError> {
    let len = paragraph.sentences.len();
    if answer_index >= len {
        return Err(DerivationError::SentenceOutOfRange {
            index: answer_index,
            len,
        });
    }
    if len == 1 {
        return Err(DerivationError::EmptyContext);
    }
    Ok(paragraph
        .sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != answer_index)
        .map(|(_, s)| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

fn derive_articles<F>(articles: &[Article], per_paragraph: F) -> Derivation
where
    F: Fn(&Article, usize, &Paragraph) -> Derivation + Sync,
{
    articles
        .par_iter()
        .map(|article| {
            article
                .paragraphs
                .iter()
                .enumerate()
                .map(|(pi, p)| per_paragraph(article, pi, p))
                .fold(Derivation::default(), Derivation::merge)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Derivation::default(), Derivation::merge)
}

fn check_origin(corpus: &Corpus, expected: Origin) -> Result<(), DerivationError> {
    if corpus.origin != expected {
        return Err(DerivationError::WrongOrigin {
            expected,
            actual: corpus.origin,
        });
    }
    Ok(())
}

/// Conversational regime: source = all sentences before `s_a`.
pub fn derive_conversational(corpus: &Corpus) -> Result<Derivation, DerivationError> {
    check_origin(corpus, Origin::Conversational)?;
    Ok(derive_articles(
        &corpus.articles,
        |article, paragraph_index, paragraph| {
            let mut out = Derivation::default();
            for qa in &paragraph.qa_pairs {
                out.questions += 1;
                let a = qa.answer_sentence_index;
                if a == 0 {
                    out.skipped_first_sentence += 1;
                    continue;
                }
                let Ok(context) = build_stripped_context(paragraph, a) else {
                    out.skipped_empty_context += 1;
                    continue;
                };
                let source = paragraph.sentences[..a]
                    .iter()
                    .map(|s| s.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.triplets.push(CuriosityTriplet {
                    source,
                    context,
                    target: qa.question.clone(),
                    meta: TripletMeta {
                        article_id: article.id.clone(),
                        paragraph_index,
                        source_sentence_indices: (0..a).collect(),
                        answer_sentence_index: a,
                        constraint_mode: ConstraintMode::Conversational,
                    },
                });
            }
            out
        },
    ))
}

/// Standard regime: one triplet per other sentence `s_x`, `x != a`. With
/// `constrained`, a pair survives only if every entity surface of the
/// question (case-insensitive) is among the entity surfaces of `s_x`.
pub fn derive_standard(
    corpus: &Corpus,
    constrained: bool,
    tagger: &dyn EntityTagger,
) -> Result<Derivation, DerivationError> {
    check_origin(corpus, Origin::Standard)?;
    let mode = if constrained {
        ConstraintMode::NerConstrained
    } else {
        ConstraintMode::Unconstrained
    };
    Ok(derive_articles(
        &corpus.articles,
        |article, paragraph_index, paragraph| {
            let mut out = Derivation::default();
            let sentence_entities = if constrained {
                let mut pool: Vec<&str> = paragraph.sentence_texts().collect();
                pool.extend(paragraph.qa_pairs.iter().map(|q| q.question.as_str()));
                let sentences: Vec<_> = paragraph
                    .sentence_texts()
                    .map(|s| entities::surface_set(&tagger.entities(s, &pool)))
                    .collect();
                let questions: Vec<_> = paragraph
                    .qa_pairs
                    .iter()
                    .map(|q| entities::surface_set(&tagger.entities(&q.question, &pool)))
                    .collect();
                Some((sentences, questions))
            } else {
                None
            };
            for (qi, qa) in paragraph.qa_pairs.iter().enumerate() {
                out.questions += 1;
                let a = qa.answer_sentence_index;
                let Ok(context) = build_stripped_context(paragraph, a) else {
                    out.skipped_empty_context += 1;
                    continue;
                };
                for (x, sentence) in paragraph.sentences.iter().enumerate() {
                    if x == a {
                        continue;
                    }
                    if let Some((sentences, questions)) = &sentence_entities {
                        if !questions[qi].is_subset(&sentences[x]) {
                            out.filtered_by_entities += 1;
                            continue;
                        }
                    }
                    out.triplets.push(CuriosityTriplet {
                        source: sentence.text.clone(),
                        context: context.clone(),
                        target: qa.question.clone(),
                        meta: TripletMeta {
                            article_id: article.id.clone(),
                            paragraph_index,
                            source_sentence_indices: vec![x],
                            answer_sentence_index: a,
                            constraint_mode: mode,
                        },
                    });
                }
            }
            out
        },
    ))
}

/// Classic answer-aware QG pairs (source = `s_a`, target = `q`), used for
/// pretraining. The context field carries the full paragraph.
pub fn standard_qg_pairs(corpus: &Corpus) -> Vec<CuriosityTriplet> {
    let mut out = Vec::new();
    for article in &corpus.articles {
        for (paragraph_index, p) in article.paragraphs.iter().enumerate() {
            for qa in &p.qa_pairs {
                let a = qa.answer_sentence_index;
                out.push(CuriosityTriplet {
                    source: p.sentences[a].text.clone(),
                    context: p.raw_text.clone(),
                    target: qa.question.clone(),
                    meta: TripletMeta {
                        article_id: article.id.clone(),
                        paragraph_index,
                        source_sentence_indices: vec![a],
                        answer_sentence_index: a,
                        constraint_mode: ConstraintMode::Unconstrained,
                    },
                });
            }
        }
    }
    out
}

/// Triplets as JSONL, one per line.
pub fn triplets_to_jsonl(triplets: &[CuriosityTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&serde_json::to_string(t).expect("triplets always serialize"));
        out.push('\n');
    }
    out
}

pub fn triplets_from_jsonl(
    text: &str,
) -> Result<Vec<CuriosityTriplet>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}
