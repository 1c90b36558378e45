use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::qa_scorer::{QaScore, QaScorer};
use crate::text::metric_tokens;

use super::{corpus_bleu, self_bleu, sentence_bleu, BleuConfig, MetricsError, MAX_ORDER};

/// One row block of the results table for a single system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system_name: String,
    pub bleu: BTreeMap<usize, f64>,
    pub self_bleu: BTreeMap<usize, f64>,
    pub qa_source: f64,
    pub qa_context: f64,
    pub sample_count: usize,
}

/// Per-sample inputs to [`evaluate_system`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub hypothesis: String,
    pub reference: String,
    pub source: String,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub max_n: usize,
    pub self_bleu: BleuConfig,
    pub self_bleu_cap: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_n: MAX_ORDER,
            self_bleu: BleuConfig::default(),
            self_bleu_cap: 1000,
            seed: 0,
        }
    }
}

/// Per-sample values, used for correlation with human ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub id: String,
    /// Smoothed sentence BLEU-n for n = 1..=max_n.
    pub bleu: Vec<f64>,
    pub qa_source: f64,
    pub qa_context: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub items: Vec<ItemScores>,
}

fn probability(
    question: &str,
    result: Result<QaScore, crate::qa_scorer::ScorerError>,
    id: &str,
) -> Result<f64, MetricsError> {
    if question.trim().is_empty() {
        return Ok(0.0);
    }
    result
        .map(|s| s.probability)
        .map_err(|source| MetricsError::Scorer {
            sample: id.to_string(),
            source,
        })
}

/// Score a system's generations: corpus BLEU-1..n, Self-BLEU-1..n and mean
/// QA_source / QA_context. An empty generated question counts as
/// unanswerable (probability 0) on both sides.
pub fn evaluate_system(
    system_name: &str,
    items: &[EvalItem],
    scorer: &dyn QaScorer,
    config: &EvalConfig,
) -> Result<Evaluation, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty("evaluation items"));
    }
    let hyps: Vec<Vec<String>> = items.iter().map(|i| metric_tokens(&i.hypothesis)).collect();
    let refs: Vec<Vec<String>> = items.iter().map(|i| metric_tokens(&i.reference)).collect();
    let mut bleu = BTreeMap::new();
    let mut sb = BTreeMap::new();
    for n in 1..=config.max_n {
        bleu.insert(n, corpus_bleu(&hyps, &refs, n)?);
        if hyps.len() >= 2 {
            sb.insert(
                n,
                self_bleu(
                    &hyps,
                    n,
                    config.self_bleu_cap,
                    config.seed,
                    &config.self_bleu,
                )?,
            );
        }
    }

    let requests: Vec<(String, String)> = items
        .iter()
        .flat_map(|i| {
            [
                (i.hypothesis.clone(), i.source.clone()),
                (i.hypothesis.clone(), i.context.clone()),
            ]
        })
        .collect();
    let scored = scorer
        .score_batch(&requests)
        .map_err(|source| MetricsError::Scorer {
            sample: items[0].id.clone(),
            source,
        })?;
    let mut scored = scored.into_iter();
    let smooth = BleuConfig::smoothed();
    let mut per_item = Vec::with_capacity(items.len());
    for (k, item) in items.iter().enumerate() {
        let src = probability(
            &item.hypothesis,
            scored.next().expect("two per item"),
            &item.id,
        )?;
        let ctx = probability(
            &item.hypothesis,
            scored.next().expect("two per item"),
            &item.id,
        )?;
        let bleu = (1..=config.max_n)
            .map(|n| sentence_bleu(&hyps[k], &[refs[k].as_slice()], n, &smooth))
            .collect::<Result<Vec<_>, _>>()?;
        per_item.push(ItemScores {
            id: item.id.clone(),
            bleu,
            qa_source: src,
            qa_context: ctx,
        });
    }
    let n = per_item.len() as f64;
    let report = MetricReport {
        system_name: system_name.to_string(),
        bleu,
        self_bleu: sb,
        qa_source: per_item.iter().map(|i| i.qa_source).sum::<f64>() / n,
        qa_context: per_item.iter().map(|i| i.qa_context).sum::<f64>() / n,
        sample_count: items.len(),
    };
    Ok(Evaluation {
        report,
        items: per_item,
    })
}

impl MetricReport {
    fn rows(&self) -> Vec<(String, Option<f64>)> {
        let mut rows = Vec::new();
        for n in 1..=MAX_ORDER {
            rows.push((format!("BLEU{n}"), self.bleu.get(&n).copied()));
        }
        for n in 1..=MAX_ORDER {
            rows.push((format!("Self-B{n}"), self.self_bleu.get(&n).copied()));
        }
        rows.push(("QA_source".into(), Some(self.qa_source)));
        rows.push(("QA_context".into(), Some(self.qa_context)));
        rows
    }

    /// Metric-by-system CSV, values ×100 with two decimals.
    pub fn table_csv(reports: &[MetricReport]) -> String {
        let mut out = String::from("metric");
        for r in reports {
            out.push(',');
            out.push_str(&r.system_name);
        }
        out.push('\n');
        let per_system: Vec<_> = reports.iter().map(|r| r.rows()).collect();
        let Some(first) = per_system.first() else {
            return out;
        };
        for (row, (label, _)) in first.iter().enumerate() {
            out.push_str(label);
            for rows in &per_system {
                out.push(',');
                if let Some(v) = rows[row].1 {
                    out.push_str(&format!("{:.2}", v * 100.0));
                }
            }
            out.push('\n');
        }
        out.push_str("samples");
        for r in reports {
            out.push_str(&format!(",{}", r.sample_count));
        }
        out.push('\n');
        out
    }

    /// Aligned text rendering of [`MetricReport::table_csv`].
    pub fn render_table(reports: &[MetricReport]) -> String {
        let csv = Self::table_csv(reports);
        let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                rows.iter()
                    .map(|r| r.get(c).map_or(0, |s| s.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(
                    &"-".repeat(widths.iter().sum::<usize>() + 3 * cols.saturating_sub(1)),
                );
                out.push('\n');
            }
        }
        out
    }
}
