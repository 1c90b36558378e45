use crate::qa_scorer::{QaScore, QaScorer};

use super::MetricsError;

fn qa_prob(
    question: &str,
    text: &str,
    scorer: &dyn QaScorer,
    what: &'static str,
) -> Result<f64, MetricsError> {
    if question.trim().is_empty() {
        return Err(MetricsError::EmptyText("question"));
    }
    if text.trim().is_empty() {
        return Err(MetricsError::EmptyText(what));
    }
    scorer
        .score(question, text)
        .map(|s| s.probability)
        .map_err(|source| MetricsError::Scorer {
            sample: String::new(),
            source,
        })
}

/// Answerability of `question` against its own source sentence(s); lower
/// means the answer is less likely to be in the source.
pub fn qa_source(question: &str, source: &str, scorer: &dyn QaScorer) -> Result<f64, MetricsError> {
    qa_prob(question, source, scorer, "source")
}

/// Answerability of `question` against the stripped paragraph `P'`; higher
/// means the question is more relevant to the surrounding text.
pub fn qa_context(
    question: &str,
    context: &str,
    scorer: &dyn QaScorer,
) -> Result<f64, MetricsError> {
    qa_prob(question, context, scorer, "context")
}

/// Balanced reward `QA_context - QA_source`, in `[-1, 1]`.
pub fn curiosity_reward(
    question: &str,
    source: &str,
    context: &str,
    scorer: &dyn QaScorer,
) -> Result<f64, MetricsError> {
    let c = qa_context(question, context, scorer)?;
    let s = qa_source(question, source, scorer)?;
    Ok(c - s)
}

/// Reward from already computed context and source scores.
pub fn reward_from_scores(context: &QaScore, source: &QaScore) -> f64 {
    context.probability - source.probability
}
