use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::metric_tokens;

use super::AnalysisError;

/// Bucket collecting every token outside the top-k.
pub const OTHER_TOKEN: &str = "<other>";
/// Bucket for questions with no tokens at all.
pub const EMPTY_TOKEN: &str = "<empty>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub count: usize,
    pub frequency: f64,
}

/// Relative frequencies of first tokens. `entries` holds the top-k tokens by
/// count (ties broken alphabetically); the remainder is in `other_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenHistogram {
    pub entries: Vec<TokenCount>,
    pub other_count: usize,
    pub total_count: usize,
}

impl TokenHistogram {
    pub fn frequency(&self, token: &str) -> f64 {
        if token == OTHER_TOKEN {
            return self.other_frequency();
        }
        self.entries
            .iter()
            .find(|e| e.token == token)
            .map_or(0.0, |e| e.frequency)
    }

    /// Equals `1 - Σ entries` up to rounding.
    pub fn other_frequency(&self) -> f64 {
        self.other_count as f64 / self.total_count as f64
    }

    /// Entries followed by the `<other>` bucket when it is non-empty.
    pub fn rows(&self) -> Vec<(String, usize, f64)> {
        let mut rows: Vec<_> = self
            .entries
            .iter()
            .map(|e| (e.token.clone(), e.count, e.frequency))
            .collect();
        if self.other_count > 0 {
            rows.push((
                OTHER_TOKEN.to_string(),
                self.other_count,
                self.other_frequency(),
            ));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("token,count,frequency\n");
        for (token, count, freq) in self.rows() {
            out.push_str(&format!("{},{count},{freq:.6}\n", csv_field(&token)));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Histogram of the first metric token (lowercased) of each question.
pub fn first_token_histogram<T: AsRef<str>>(
    questions: &[T],
    top_k: usize,
) -> Result<TokenHistogram, AnalysisError> {
    if questions.is_empty() {
        return Err(AnalysisError::Empty("questions"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for q in questions {
        let first = metric_tokens(q.as_ref())
            .into_iter()
            .next()
            .unwrap_or_else(|| EMPTY_TOKEN.to_string());
        *counts.entry(first).or_default() += 1;
    }
    let mut sorted: Vec<(String, usize)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total = questions.len();
    let other_count = sorted.iter().skip(top_k).map(|(_, c)| c).sum();
    sorted.truncate(top_k);
    let entries = sorted
        .into_iter()
        .map(|(token, count)| TokenCount {
            token,
            count,
            frequency: count as f64 / total as f64,
        })
        .collect();
    Ok(TokenHistogram {
        entries,
        other_count,
        total_count: total,
    })
}

/// Fraction of questions whose metric tokens start with the prefix's tokens.
pub fn prefix_rate<T: AsRef<str>>(questions: &[T], prefix: &str) -> Result<f64, AnalysisError> {
    let prefix = metric_tokens(prefix);
    if prefix.is_empty() {
        return Err(AnalysisError::EmptyPrefix);
    }
    if questions.is_empty() {
        return Err(AnalysisError::Empty("questions"));
    }
    let hits = questions
        .iter()
        .filter(|q| metric_tokens(q.as_ref()).starts_with(&prefix))
        .count();
    Ok(hits as f64 / questions.len() as f64)
}
