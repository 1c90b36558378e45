use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::text::{slice_chars, CharSpan};

use super::{
    locate_answer_sentence, Article, CanonicalRecord, Corpus, CorpusError, Origin, Paragraph,
    QaPair, Split,
};

/// A QA pair dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub qa_index: usize,
    pub reason: String,
}

/// Counts collected while loading a canonical file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.rejections.len()
    }
}

pub fn load_standard_qa(path: &Path, split: Split) -> Result<(Corpus, IngestReport), CorpusError> {
    let text = read(path)?;
    parse_records(&text, Origin::Standard, split)
}

pub fn load_conversational_qa(
    path: &Path,
    split: Split,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let text = read(path)?;
    parse_records(&text, Origin::Conversational, split)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct ParsedLine {
    article_id: String,
    title: String,
    paragraph: Paragraph,
    rejections: Vec<Rejection>,
}

fn build_paragraph(record: CanonicalRecord, line: usize, origin: Origin) -> ParsedLine {
    let mut paragraph = Paragraph::new(record.paragraph);
    let mut rejections = Vec::new();
    for (qa_index, qa) in record.qas.into_iter().enumerate() {
        let reject = |reason: String| Rejection {
            line,
            qa_index,
            reason,
        };
        if origin == Origin::Conversational && qa.turn_index.is_none() {
            rejections.push(reject("missing turn_index".into()));
            continue;
        }
        if qa.answer_start > qa.answer_end {
            rejections.push(reject(format!(
                "answer_start {} > answer_end {}",
                qa.answer_start, qa.answer_end
            )));
            continue;
        }
        let span = CharSpan::new(qa.answer_start, qa.answer_end);
        match slice_chars(&paragraph.raw_text, span) {
            Some(slice) if slice == qa.answer_text => {}
            Some(slice) => {
                rejections.push(reject(format!(
                    "span slice {slice:?} differs from answer_text {:?}",
                    qa.answer_text
                )));
                continue;
            }
            None => {
                rejections.push(reject("answer span outside paragraph".into()));
                continue;
            }
        }
        let answer_sentence_index = match locate_answer_sentence(&paragraph, span) {
            Ok(i) => i,
            Err(e) => {
                rejections.push(reject(e.to_string()));
                continue;
            }
        };
        paragraph.qa_pairs.push(QaPair {
            question: qa.question,
            answer_text: qa.answer_text,
            answer_span: span,
            answer_sentence_index,
            turn_index: match origin {
                Origin::Conversational => qa.turn_index,
                Origin::Standard => None,
            },
        });
    }
    ParsedLine {
        article_id: record.article_id,
        title: record.title,
        paragraph,
        rejections,
    }
}

/// Parse canonical JSONL text. Malformed JSON aborts with the offending line
/// number; QA pairs that violate the span contract are dropped and reported.
/// Lines sharing an `article_id` are grouped into one article, in order of
/// first appearance.
pub fn parse_records(
    text: &str,
    origin: Origin,
    split: Split,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let parsed: Vec<ParsedLine> = lines
        .par_iter()
        .map(|&(line, raw)| {
            serde_json::from_str::<CanonicalRecord>(raw)
                .map(|record| build_paragraph(record, line, origin))
                .map_err(|e| CorpusError::Malformed {
                    line,
                    message: e.to_string(),
                })
        })
        .collect::<Result<_, _>>()?;

    let mut report = IngestReport {
        records: parsed.len(),
        ..Default::default()
    };
    let mut articles: Vec<Article> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for p in parsed {
        report.accepted += p.paragraph.qa_pairs.len();
        report.rejections.extend(p.rejections);
        match by_id.get(&p.article_id) {
            Some(&i) => articles[i].paragraphs.push(p.paragraph),
            None => {
                by_id.insert(p.article_id.clone(), articles.len());
                articles.push(Article {
                    id: p.article_id,
                    title: p.title,
                    paragraphs: vec![p.paragraph],
                });
            }
        }
    }
    Ok((
        Corpus {
            articles,
            origin,
            split,
        },
        report,
    ))
}
