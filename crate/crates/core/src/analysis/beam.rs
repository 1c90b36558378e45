use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivation::CuriosityTriplet;
use crate::metrics::{evaluate_system, EvalConfig, EvalItem, Evaluation, MetricReport};
use crate::model::{CopyTransformer, GenerationResult};
use crate::qa_scorer::QaScorer;

use super::tokens::prefix_rate;
use super::AnalysisError;

/// An evaluation sample before decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamInput {
    pub id: String,
    pub source: String,
    pub context: String,
    pub reference: String,
}

impl BeamInput {
    /// Ids are the triplets' positions in the slice.
    pub fn from_triplets(triplets: &[CuriosityTriplet]) -> Vec<Self> {
        triplets
            .iter()
            .enumerate()
            .map(|(i, t)| Self {
                id: i.to_string(),
                source: t.source.clone(),
                context: t.context.clone(),
                reference: t.target.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamColumn {
    pub k: usize,
    pub generations: Vec<GenerationResult>,
    pub evaluation: Evaluation,
}

/// One metric report per beam width, in the order requested.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamDivergence {
    pub columns: Vec<BeamColumn>,
}

impl BeamDivergence {
    pub fn reports(&self) -> Vec<MetricReport> {
        self.columns
            .iter()
            .map(|c| c.evaluation.report.clone())
            .collect()
    }

    pub fn table_csv(&self) -> String {
        MetricReport::table_csv(&self.reports())
    }

    /// `(k, rate)` for each column.
    pub fn prefix_rates(&self, prefix: &str) -> Result<Vec<(usize, f64)>, AnalysisError> {
        self.columns
            .iter()
            .map(|c| {
                let texts: Vec<&str> = c.generations.iter().map(|g| g.text.as_str()).collect();
                Ok((c.k, prefix_rate(&texts, prefix)?))
            })
            .collect()
    }
}

/// Decode every source with beam search at each width in `k_values` and
/// evaluate the outputs. Columns are named `beam<k>`.
pub fn beam_divergence_report(
    model: &CopyTransformer,
    inputs: &[BeamInput],
    k_values: &[usize],
    scorer: &dyn QaScorer,
    config: &EvalConfig,
) -> Result<BeamDivergence, AnalysisError> {
    if k_values.is_empty() {
        return Err(AnalysisError::Empty("beam sizes"));
    }
    if inputs.is_empty() {
        return Err(AnalysisError::Empty("evaluation samples"));
    }
    let max_len = model.config().max_target_len;
    let mut columns = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let generations = inputs
            .par_iter()
            .map(|input| model.beam_search(&model.encode_source(&input.source), k, max_len))
            .collect::<Result<Vec<_>, _>>()?;
        let items: Vec<EvalItem> = inputs
            .iter()
            .zip(&generations)
            .map(|(input, g)| EvalItem {
                id: input.id.clone(),
                hypothesis: g.text.clone(),
                reference: input.reference.clone(),
                source: input.source.clone(),
                context: input.context.clone(),
            })
            .collect();
        let evaluation = evaluate_system(&format!("beam{k}"), &items, scorer, config)?;
        columns.push(BeamColumn {
            k,
            generations,
            evaluation,
        });
    }
    Ok(BeamDivergence { columns })
}
