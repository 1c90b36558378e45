use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::derivation::CuriosityTriplet;
use crate::model::vocab::PAD;
use crate::model::{CopyTransformer, SourceEncoding};

use super::TrainingError;

/// A training pair with the texts the reward is computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub source: String,
    pub context: String,
    pub target: String,
}

impl From<&CuriosityTriplet> for Example {
    fn from(t: &CuriosityTriplet) -> Self {
        Self {
            source: t.source.clone(),
            context: t.context.clone(),
            target: t.target.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub source: SourceEncoding,
    /// Extended target ids ending in EOS.
    pub target: Vec<u32>,
    pub example: Example,
}

/// Examples encoded against one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub vocab_fingerprint: u64,
    pub examples: Vec<EncodedExample>,
}

impl EncodedSet {
    /// Examples whose source tokenizes to nothing are dropped.
    pub fn new(model: &CopyTransformer, examples: &[Example]) -> Self {
        let examples = examples
            .iter()
            .filter_map(|e| {
                let source = model.encode_source(&e.source);
                if source.ids.is_empty() {
                    return None;
                }
                let target = model.encode_target(&e.target, &source);
                Some(EncodedExample {
                    source,
                    target,
                    example: e.clone(),
                })
            })
            .collect();
        Self {
            vocab_fingerprint: model.vocab().fingerprint(),
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn check_vocab(&self, model: &CopyTransformer) -> Result<(), TrainingError> {
        let expected = model.vocab().fingerprint();
        if self.vocab_fingerprint != expected {
            return Err(TrainingError::VocabularyMismatch {
                expected,
                found: self.vocab_fingerprint,
            });
        }
        Ok(())
    }
}

/// Teacher-forcing batch: decoder inputs are BOS-shifted targets in the base
/// vocabulary; targets keep extended ids. Padding is excluded by `mask`.
#[derive(Debug, Clone)]
pub struct TrainingBatch<'a> {
    pub sources: Vec<&'a SourceEncoding>,
    pub decoder_inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
}

impl<'a> TrainingBatch<'a> {
    pub fn new(model: &CopyTransformer, items: &[&'a EncodedExample]) -> Self {
        Self::from_sequences(
            model,
            items.iter().map(|e| &e.source).collect(),
            items.iter().map(|e| e.target.clone()).collect(),
        )
    }

    pub fn from_sequences(
        model: &CopyTransformer,
        sources: Vec<&'a SourceEncoding>,
        targets: Vec<Vec<u32>>,
    ) -> Self {
        let decoder_inputs = targets
            .iter()
            .map(|t| model.vocab().decoder_input(t))
            .collect();
        Self {
            sources,
            decoder_inputs,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Padded (B, T) target ids and the matching 0/1 mask.
    pub fn target_tensors(
        &self,
        dtype: DType,
        device: &Device,
    ) -> Result<(Tensor, Tensor), TrainingError> {
        let b = self.targets.len();
        let t = self.targets.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = vec![PAD; b * t];
        let mut mask = vec![0.0f64; b * t];
        for (i, row) in self.targets.iter().enumerate() {
            for (j, &id) in row.iter().enumerate() {
                ids[i * t + j] = id;
                mask[i * t + j] = 1.0;
            }
        }
        Ok((
            Tensor::from_vec(ids, (b, t), device)?,
            Tensor::from_vec(mask, (b, t), device)?.to_dtype(dtype)?,
        ))
    }
}
