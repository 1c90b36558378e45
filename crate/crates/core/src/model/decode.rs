//! Model-agnostic decoders over a next-token log-probability oracle.

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Next-token log-probabilities given the tokens emitted so far.
pub trait StepDistribution {
    fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError>;
    fn eos(&self) -> u32;
    fn emittable(&self, _id: u32) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Beam,
    Sample,
}

impl std::str::FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "beam" => Ok(Self::Beam),
            "sample" => Ok(Self::Sample),
            other => Err(format!(
                "unknown decode mode {other:?} (greedy, beam, sample)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Emitted ids, including a final EOS when one was produced.
    pub token_ids: Vec<u32>,
    pub text: String,
    pub log_prob: f64,
    pub decode_mode: DecodeMode,
    pub beam_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
}

fn check_row(row: &[f64]) -> Result<(), ModelError> {
    if row.iter().any(|v| v.is_nan()) {
        return Err(ModelError::Decode("NaN in step distribution".into()));
    }
    Ok(())
}

/// Argmax per step, ties to the lowest id; stops after EOS or `max_len` tokens.
pub fn greedy<S: StepDistribution + ?Sized>(
    dist: &S,
    max_len: usize,
) -> Result<Hypothesis, ModelError> {
    let eos = dist.eos();
    let mut h = Hypothesis::default();
    for _ in 0..max_len {
        let row = dist.step_log_probs(&h.tokens)?;
        check_row(&row)?;
        let mut best: Option<(u32, f64)> = None;
        for (i, &lp) in row.iter().enumerate() {
            let id = i as u32;
            if dist.emittable(id) && best.is_none_or(|(_, b)| lp > b) {
                best = Some((id, lp));
            }
        }
        let (id, lp) = best.ok_or_else(|| ModelError::Decode("no emittable token".into()))?;
        h.tokens.push(id);
        h.log_prob += lp;
        if id == eos {
            break;
        }
    }
    Ok(h)
}

/// Higher score first, then lexicographically smaller token sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Length-unnormalized beam search. Each step keeps the `k` best expansions;
/// expansions ending in EOS leave the beam as finished hypotheses. Returns the
/// best finished hypothesis, else the best unfinished one at `max_len`.
pub fn beam<S: StepDistribution + ?Sized>(
    dist: &S,
    k: usize,
    max_len: usize,
) -> Result<Hypothesis, ModelError> {
    if k == 0 {
        return Err(ModelError::InvalidBeam);
    }
    let eos = dist.eos();
    let mut live = vec![Hypothesis::default()];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        // (score, parent, token)
        let mut expansions: Vec<(f64, usize, u32)> = Vec::new();
        for (p, h) in live.iter().enumerate() {
            let row = dist.step_log_probs(&h.tokens)?;
            check_row(&row)?;
            for (i, &lp) in row.iter().enumerate() {
                if dist.emittable(i as u32) {
                    expansions.push((h.log_prob + lp, p, i as u32));
                }
            }
        }
        if expansions.is_empty() {
            return Err(ModelError::Decode("no emittable token".into()));
        }
        // equal scores: lexicographic on the full token sequence
        expansions.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens).then(a.2.cmp(&b.2)))
        });
        expansions.truncate(k);
        let mut next = Vec::with_capacity(k);
        for (score, p, id) in expansions {
            let mut tokens = live[p].tokens.clone();
            tokens.push(id);
            let h = Hypothesis {
                tokens,
                log_prob: score,
            };
            if id == eos {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
        finished.sort_by(rank);
        match (finished.first(), live.first()) {
            (_, None) => break,
            // scores never increase, so no live hypothesis can overtake
            (Some(f), Some(l)) if f.log_prob >= l.log_prob => break,
            _ => {}
        }
    }
    finished.sort_by(rank);
    live.sort_by(rank);
    finished
        .into_iter()
        .next()
        .or_else(|| live.into_iter().next())
        .ok_or_else(|| ModelError::Decode("empty beam".into()))
}

/// Ancestral sampling, one token at a time.
pub fn sample<S: StepDistribution + ?Sized, R: Rng + ?Sized>(
    dist: &S,
    max_len: usize,
    rng: &mut R,
) -> Result<Hypothesis, ModelError> {
    let eos = dist.eos();
    let mut h = Hypothesis::default();
    for _ in 0..max_len {
        let row = dist.step_log_probs(&h.tokens)?;
        check_row(&row)?;
        let weights: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(i, lp)| {
                if dist.emittable(i as u32) {
                    lp.exp()
                } else {
                    0.0
                }
            })
            .collect();
        let index = WeightedIndex::new(&weights).map_err(|e| ModelError::Decode(e.to_string()))?;
        let id = index.sample(rng) as u32;
        h.tokens.push(id);
        h.log_prob += row[id as usize];
        if id == eos {
            break;
        }
    }
    Ok(h)
}
