//! Thin adapters from the native nested-JSON releases to canonical records.

use std::str::FromStr;

use serde::Deserialize;

use crate::text::char_len;

use super::{CanonicalQa, CanonicalRecord, CorpusError};

const QUAC_NO_ANSWER: &str = "CANNOTANSWER";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NativeFormat {
    /// SQuAD v1.1 style: `data[].paragraphs[].qas[].answers[]`.
    Squad,
    /// QuAC style: one dialogue per paragraph, `orig_answer` per turn.
    Quac,
}

impl FromStr for NativeFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squad" | "standard" => Ok(Self::Squad),
            "quac" | "conversational" => Ok(Self::Quac),
            other => Err(CorpusError::Import(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ImportSummary {
    pub paragraphs: usize,
    pub questions: usize,
    /// Questions without a usable answer (no answers, or the no-answer marker).
    pub dropped: usize,
}

#[derive(Deserialize)]
struct NativeFile<P> {
    data: Vec<NativeArticle<P>>,
}

#[derive(Deserialize)]
struct NativeArticle<P> {
    title: String,
    paragraphs: Vec<P>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    question: String,
    #[serde(default)]
    answers: Vec<NativeAnswer>,
}

#[derive(Deserialize, Clone)]
struct NativeAnswer {
    text: String,
    answer_start: usize,
}

#[derive(Deserialize)]
struct QuacParagraph {
    context: String,
    #[serde(default)]
    id: Option<String>,
    qas: Vec<QuacQa>,
}

#[derive(Deserialize)]
struct QuacQa {
    question: String,
    #[serde(default)]
    orig_answer: Option<NativeAnswer>,
    #[serde(default)]
    answers: Vec<NativeAnswer>,
}

fn canonical_qa(question: String, answer: NativeAnswer, turn_index: Option<usize>) -> CanonicalQa {
    CanonicalQa {
        question,
        answer_end: answer.answer_start + char_len(&answer.text),
        answer_start: answer.answer_start,
        answer_text: answer.text,
        turn_index,
    }
}

/// Convert a native release to canonical records. Spans are not validated
/// here; the canonical loader does that.
pub fn import_native(
    json: &str,
    format: NativeFormat,
) -> Result<(Vec<CanonicalRecord>, ImportSummary), CorpusError> {
    let mut summary = ImportSummary::default();
    let mut records = Vec::new();
    match format {
        NativeFormat::Squad => {
            let file: NativeFile<SquadParagraph> =
                serde_json::from_str(json).map_err(|e| CorpusError::Import(e.to_string()))?;
            for article in file.data {
                for paragraph in article.paragraphs {
                    let mut qas = Vec::new();
                    for qa in paragraph.qas {
                        summary.questions += 1;
                        match qa.answers.into_iter().next() {
                            Some(answer) => qas.push(canonical_qa(qa.question, answer, None)),
                            None => summary.dropped += 1,
                        }
                    }
                    summary.paragraphs += 1;
                    records.push(CanonicalRecord {
                        article_id: article.title.clone(),
                        title: article.title.replace('_', " "),
                        paragraph: paragraph.context,
                        qas,
                    });
                }
            }
        }
        NativeFormat::Quac => {
            let file: NativeFile<QuacParagraph> =
                serde_json::from_str(json).map_err(|e| CorpusError::Import(e.to_string()))?;
            for (article_index, article) in file.data.into_iter().enumerate() {
                for (paragraph_index, paragraph) in article.paragraphs.into_iter().enumerate() {
                    let context = paragraph
                        .context
                        .strip_suffix(QUAC_NO_ANSWER)
                        .map(|c| c.trim_end().to_string())
                        .unwrap_or(paragraph.context);
                    let mut qas = Vec::new();
                    for (turn, qa) in paragraph.qas.into_iter().enumerate() {
                        summary.questions += 1;
                        let answer = qa.orig_answer.or_else(|| qa.answers.into_iter().next());
                        match answer {
                            Some(a) if a.text != QUAC_NO_ANSWER => {
                                qas.push(canonical_qa(qa.question, a, Some(turn)))
                            }
                            _ => summary.dropped += 1,
                        }
                    }
                    summary.paragraphs += 1;
                    records.push(CanonicalRecord {
                        article_id: paragraph
                            .id
                            .unwrap_or_else(|| format!("quac-{article_index}-{paragraph_index}")),
                        title: article.title.clone(),
                        paragraph: context,
                        qas,
                    });
                }
            }
        }
    }
    Ok((records, summary))
}

/// Serialize records as canonical JSONL (one record per line, trailing newline).
pub fn to_jsonl(records: &[CanonicalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("canonical records always serialize"));
        out.push('\n');
    }
    out
}
