//! Character spans and the metric tokenizer shared by every module.
//!
//! All offsets are counted in Unicode scalar values (code points), never
//! bytes, so files produced here line up with offsets computed in other
//! languages.

use serde::{Deserialize, Serialize};

/// Half-open `[start, end)` range of code points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

/// Number of code points in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice `text` by a code-point span. Returns `None` when the span runs past
/// the end of the text.
pub fn slice_chars(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let mut indices = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()));
    let start = indices.nth(span.start)?;
    let end = if span.is_empty() {
        start
    } else {
        indices.nth(span.len() - 1)?
    };
    Some(&text[start..end])
}

/// A lowercased metric token with its span in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub text: String,
    pub span: CharSpan,
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Tokenize for evaluation: lowercase, every punctuation character becomes a
/// standalone token, everything else splits on whitespace.
pub fn metric_tokens_with_spans(text: &str) -> Vec<SpannedToken> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_start = 0;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() || is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(SpannedToken {
                    text: std::mem::take(&mut current),
                    span: CharSpan::new(current_start, i),
                });
            }
            if is_punctuation(c) {
                tokens.push(SpannedToken {
                    text: c.to_lowercase().collect(),
                    span: CharSpan::new(i, i + 1),
                });
            }
        } else {
            if current.is_empty() {
                current_start = i;
            }
            current.extend(c.to_lowercase());
        }
    }
    if !current.is_empty() {
        let end = current_start + text.chars().skip(current_start).count();
        tokens.push(SpannedToken {
            text: current,
            span: CharSpan::new(current_start, end),
        });
    }
    tokens
}

pub fn metric_tokens(text: &str) -> Vec<String> {
    metric_tokens_with_spans(text)
        .into_iter()
        .map(|t| t.text)
        .collect()
}
