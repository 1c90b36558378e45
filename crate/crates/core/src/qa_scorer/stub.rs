use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use crate::text::{metric_tokens, metric_tokens_with_spans, slice_chars, CharSpan};

use super::{QaScore, QaScorer, ScorerError};

const STOPWORD_FILE: &str = include_str!("stopwords.txt");

pub static STOPWORDS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    STOPWORD_FILE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

/// Metric tokens of `question` with at least three characters that are not
/// stopwords, deduplicated.
pub fn content_words(question: &str) -> BTreeSet<String> {
    metric_tokens(question)
        .into_iter()
        .filter(|t| t.chars().count() >= 3 && !STOPWORDS.contains(t.as_str()))
        .collect()
}

/// Deterministic offline scorer.
///
/// probability = |content words of q found in the context| / |content words|,
/// 0.5 when the question has no content words, 0.0 for an empty context. The
/// answer is the longest run of consecutive context tokens that are content
/// words (first one on ties).
#[derive(Debug, Clone, Copy, Default)]
pub struct StubScorer;

impl QaScorer for StubScorer {
    fn score(&self, question: &str, context: &str) -> Result<QaScore, ScorerError> {
        if question.trim().is_empty() {
            return Err(ScorerError::EmptyQuestion);
        }
        if context.trim().is_empty() {
            return Ok(QaScore::no_answer());
        }
        let wanted = content_words(question);
        let tokens = metric_tokens_with_spans(context);
        if wanted.is_empty() {
            return Ok(QaScore {
                probability: 0.5,
                answer_text: String::new(),
                answer_span: None,
            });
        }
        let present: HashSet<&str> = tokens
            .iter()
            .map(|t| t.text.as_str())
            .filter(|t| wanted.contains(*t))
            .collect();
        let probability = present.len() as f64 / wanted.len() as f64;

        let mut best: Option<(usize, usize)> = None;
        let mut run_start = None;
        for i in 0..=tokens.len() {
            let matched = tokens.get(i).is_some_and(|t| wanted.contains(&t.text));
            match (matched, run_start) {
                (true, None) => run_start = Some(i),
                (false, Some(s)) => {
                    if best.is_none_or(|(bs, be)| i - s > be - bs) {
                        best = Some((s, i));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        let (answer_text, answer_span) = match best {
            Some((s, e)) => {
                let span = CharSpan::new(tokens[s].span.start, tokens[e - 1].span.end);
                let text = slice_chars(context, span).unwrap_or_default().to_string();
                (text, Some(span))
            }
            None => (String::new(), None),
        };
        Ok(QaScore {
            probability,
            answer_text,
            answer_span,
        })
    }
}
