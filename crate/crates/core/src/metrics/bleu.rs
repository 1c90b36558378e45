use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Replaces zero n-gram matches at sentence level; 0 disables smoothing.
    pub smoothing_epsilon: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: MAX_ORDER,
            smoothing_epsilon: 0.0,
        }
    }
}

impl BleuConfig {
    /// The epsilon used when smoothing is switched on.
    pub const DEFAULT_EPSILON: f64 = 1e-9;

    pub fn smoothed() -> Self {
        Self {
            smoothing_epsilon: Self::DEFAULT_EPSILON,
            ..Self::default()
        }
    }
}

fn check_order(n: usize) -> Result<(), MetricsError> {
    if n == 0 || n > MAX_ORDER {
        return Err(MetricsError::InvalidOrder(n));
    }
    Ok(())
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], k: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= k {
        for w in tokens.windows(k) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total hypothesis n-grams for orders `1..=n`.
#[derive(Debug, Clone, Default)]
struct Stats {
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

impl Stats {
    fn add(&mut self, other: &Stats) {
        for k in 0..MAX_ORDER {
            self.matches[k] += other.matches[k];
            self.totals[k] += other.totals[k];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

/// Reference length closest to the hypothesis length, shorter on ties.
fn closest_ref_len<T: AsRef<str>>(hyp_len: usize, references: &[&[T]]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(hyp_len), l))
        .unwrap_or(0)
}

fn sentence_stats<T: AsRef<str>>(hyp: &[T], references: &[&[T]], n: usize) -> Stats {
    let mut stats = Stats {
        hyp_len: hyp.len(),
        ref_len: closest_ref_len(hyp.len(), references),
        ..Default::default()
    };
    for k in 1..=n {
        let hyp_counts = ngram_counts(hyp, k);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, k) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        stats.totals[k - 1] = hyp_counts.values().sum();
        stats.matches[k - 1] = hyp_counts
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

fn score(stats: &Stats, n: usize, epsilon: f64) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 0..n {
        if stats.totals[k] == 0 {
            return 0.0;
        }
        let matches = if stats.matches[k] == 0 {
            if epsilon > 0.0 {
                epsilon
            } else {
                return 0.0;
            }
        } else {
            stats.matches[k] as f64
        };
        log_sum += (matches / stats.totals[k] as f64).ln();
    }
    let r = stats.ref_len as f64;
    let c = stats.hyp_len as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / n as f64).exp()).clamp(0.0, 1.0)
}

/// Corpus-level BLEU-n with one reference per hypothesis: geometric mean of
/// clipped k-gram precisions (k = 1..=n) pooled over the corpus, times the
/// brevity penalty `min(1, exp(1 - r/c))`.
pub fn corpus_bleu<T: AsRef<str>>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    n: usize,
) -> Result<f64, MetricsError> {
    check_order(n)?;
    if hypotheses.is_empty() {
        return Err(MetricsError::Empty("hypotheses"));
    }
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch(
            hypotheses.len(),
            references.len(),
        ));
    }
    let mut total = Stats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&sentence_stats(h, &[r.as_slice()], n));
    }
    Ok(score(&total, n, 0.0))
}

/// Sentence-level BLEU-n of `hyp` against several references, with optional
/// epsilon smoothing of zero match counts.
pub fn sentence_bleu<T: AsRef<str>>(
    hyp: &[T],
    references: &[&[T]],
    n: usize,
    config: &BleuConfig,
) -> Result<f64, MetricsError> {
    check_order(n)?;
    if n > config.max_n {
        return Err(MetricsError::InvalidOrder(n));
    }
    if references.is_empty() {
        return Err(MetricsError::Empty("references"));
    }
    Ok(score(
        &sentence_stats(hyp, references, n),
        n,
        config.smoothing_epsilon,
    ))
}

/// Mean sentence BLEU of each sentence against all the others. Above `cap`
/// sentences, a seeded uniform sample of `cap` hypotheses is evaluated (the
/// references stay the full remaining set).
pub fn self_bleu<T: AsRef<str>>(
    sentences: &[Vec<T>],
    n: usize,
    cap: usize,
    seed: u64,
    config: &BleuConfig,
) -> Result<f64, MetricsError> {
    if sentences.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: sentences.len(),
        });
    }
    let indices: Vec<usize> = if sentences.len() > cap && cap > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, sentences.len(), cap).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..sentences.len()).collect()
    };
    let mut scores = Vec::with_capacity(indices.len());
    for &i in &indices {
        let refs: Vec<&[T]> = sentences
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.as_slice())
            .collect();
        scores.push(sentence_bleu(&sentences[i], &refs, n, config)?);
    }
    // sorted summation keeps the mean bit-identical under reordering
    scores.sort_by(f64::total_cmp);
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
