//! Canonical in-memory QA corpora.
//!
//! Both source dataset families are normalized to one JSONL schema (see
//! [`CanonicalRecord`]) and loaded into [`Corpus`] values whose paragraphs
//! are segmented into sentences, with every QA pair pointing at the sentence
//! that holds its answer.

pub mod fixtures;
pub mod import;
mod load;
mod segment;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, CharSpan};

pub use load::{load_conversational_qa, load_standard_qa, parse_records, IngestReport, Rejection};
pub use segment::{segment_sentences, Sentence};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("answer span {start}..{end} does not start inside any sentence")]
    SpanOutsideSentences { start: usize, end: usize },
    #[error("answer span {start}..{end} exceeds paragraph length {len}")]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("unknown split name `{0}` (expected train, validation or test)")]
    UnknownSplit(String),
    #[error("native import: {0}")]
    Import(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Standard,
    Conversational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "dev" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer_text: String,
    pub answer_span: CharSpan,
    pub answer_sentence_index: usize,
    /// Dialogue position; only set for conversational data.
    pub turn_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
    pub qa_pairs: Vec<QaPair>,
}

impl Paragraph {
    /// Segment `raw_text`; QA pairs are attached afterwards.
    pub fn new(raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let sentences = segment_sentences(&raw_text);
        Self {
            raw_text,
            sentences,
            qa_pairs: Vec::new(),
        }
    }

    pub fn sentence_texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub articles: Vec<Article>,
    pub origin: Origin,
    pub split: Split,
}

impl Corpus {
    pub fn empty(origin: Origin, split: Split) -> Self {
        Self {
            articles: Vec::new(),
            origin,
            split,
        }
    }

    pub fn paragraph_count(&self) -> usize {
        self.articles.iter().map(|a| a.paragraphs.len()).sum()
    }

    pub fn qa_count(&self) -> usize {
        self.articles
            .iter()
            .flat_map(|a| &a.paragraphs)
            .map(|p| p.qa_pairs.len())
            .sum()
    }
}

/// Index of the sentence whose span contains the start of `span`.
pub fn locate_answer_sentence(paragraph: &Paragraph, span: CharSpan) -> Result<usize, CorpusError> {
    let len = char_len(&paragraph.raw_text);
    if span.start > span.end || span.end > len {
        return Err(CorpusError::SpanOutOfBounds {
            start: span.start,
            end: span.end,
            len,
        });
    }
    paragraph
        .sentences
        .iter()
        .position(|s| s.span.contains(span.start))
        .ok_or(CorpusError::SpanOutsideSentences {
            start: span.start,
            end: span.end,
        })
}

/// One line of the canonical JSONL schema: a paragraph with its QA pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub article_id: String,
    pub title: String,
    pub paragraph: String,
    pub qas: Vec<CanonicalQa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalQa {
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
    pub answer_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::TESLA_PARAGRAPH;

    fn three_sentences() -> Paragraph {
        Paragraph::new("Alpha one here. Beta two here. Gamma three here.")
    }

    #[test]
    fn start_containment_rule() {
        let p = three_sentences();
        assert_eq!(locate_answer_sentence(&p, CharSpan::new(0, 5)).unwrap(), 0);
        // starts in sentence 1, ends in sentence 2
        assert_eq!(
            locate_answer_sentence(&p, CharSpan::new(21, 36)).unwrap(),
            1
        );
    }

    #[test]
    fn span_in_gap_or_out_of_bounds_is_an_error() {
        let p = three_sentences();
        assert!(matches!(
            locate_answer_sentence(&p, CharSpan::new(15, 17)),
            Err(CorpusError::SpanOutsideSentences { .. })
        ));
        assert!(matches!(
            locate_answer_sentence(&p, CharSpan::new(40, 400)),
            Err(CorpusError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn tesla_answer_is_in_third_sentence() {
        let p = Paragraph::new(TESLA_PARAGRAPH);
        let answer = "killed in a horse-riding accident";
        let (span, _) = fixtures::find_span(TESLA_PARAGRAPH, answer).unwrap();
        assert_eq!(locate_answer_sentence(&p, span).unwrap(), 2);
    }

    #[test]
    fn split_names_parse() {
        assert_eq!("dev".parse::<Split>().unwrap(), Split::Validation);
        assert!("holdout".parse::<Split>().is_err());
    }
}
