use candle_core::{DType, Tensor, D};
use rand_chacha::ChaCha8Rng;

use crate::metrics::reward_from_scores;
use crate::model::{CopyTransformer, SourceEncoding};
use crate::qa_scorer::{QaScore, QaScorer};

use super::batch::TrainingBatch;
use super::TrainingError;

/// `-Σ log p(target) · mask / B` for log-probabilities (B, T, V).
pub fn masked_nll(
    log_probs: &Tensor,
    targets: &Tensor,
    mask: &Tensor,
) -> Result<Tensor, TrainingError> {
    let b = targets.dim(0)?;
    let picked = log_probs
        .gather(&targets.unsqueeze(D::Minus1)?, D::Minus1)?
        .squeeze(D::Minus1)?;
    Ok(((picked * mask)?.sum_all()? * (-1.0 / b as f64))?)
}

/// Teacher-forced negative log-likelihood, summed over target positions and
/// averaged over the batch.
pub fn loss_ml(model: &CopyTransformer, batch: &TrainingBatch) -> Result<Tensor, TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    if let Some(index) = batch.targets.iter().position(Vec::is_empty) {
        return Err(TrainingError::EmptyTarget { index });
    }
    let log_probs = model.log_probs(&batch.sources, &batch.decoder_inputs)?;
    let (targets, mask) = batch.target_tensors(model.dtype(), log_probs.device())?;
    masked_nll(&log_probs, &targets, &mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tokens: Vec<u32>,
    pub text: String,
}

/// A sequence policy that can be rolled out and differentiated.
pub trait Policy {
    type Input;

    fn greedy(&self, input: &Self::Input) -> Result<Generated, TrainingError>;
    fn sample(&self, input: &Self::Input, rng: &mut ChaCha8Rng)
        -> Result<Generated, TrainingError>;
    /// Differentiable (B,) tensor of `Σ_t log p(y_t | y_<t, x)` per sequence.
    fn sequence_log_probs(
        &self,
        inputs: &[&Self::Input],
        sequences: &[Vec<u32>],
    ) -> Result<Tensor, TrainingError>;
}

impl Policy for CopyTransformer {
    type Input = SourceEncoding;

    fn greedy(&self, input: &SourceEncoding) -> Result<Generated, TrainingError> {
        let g = self.greedy_decode(input, self.config().max_target_len)?;
        Ok(Generated {
            tokens: g.token_ids,
            text: g.text,
        })
    }

    fn sample(
        &self,
        input: &SourceEncoding,
        rng: &mut ChaCha8Rng,
    ) -> Result<Generated, TrainingError> {
        let g = self.sample_with(input, self.config().max_target_len, rng)?;
        Ok(Generated {
            tokens: g.token_ids,
            text: g.text,
        })
    }

    fn sequence_log_probs(
        &self,
        inputs: &[&SourceEncoding],
        sequences: &[Vec<u32>],
    ) -> Result<Tensor, TrainingError> {
        let batch = TrainingBatch::from_sequences(self, inputs.to_vec(), sequences.to_vec());
        let log_probs = self.log_probs(&batch.sources, &batch.decoder_inputs)?;
        let (targets, mask) = batch.target_tensors(self.dtype(), log_probs.device())?;
        let picked = log_probs
            .gather(&targets.unsqueeze(D::Minus1)?, D::Minus1)?
            .squeeze(D::Minus1)?;
        Ok((picked * mask)?.sum(1)?)
    }
}

/// Policy input plus the texts its reward is computed against.
#[derive(Debug, Clone)]
pub struct RlItem<'a, I> {
    pub input: &'a I,
    pub source: &'a str,
    pub context: &'a str,
}

/// Greedy and sampled sequences with their rewards `QA_context - QA_source`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub greedy: Vec<Generated>,
    pub sampled: Vec<Generated>,
    pub reward_greedy: Vec<f64>,
    pub reward_sample: Vec<f64>,
}

impl Rollout {
    pub fn mean_reward_greedy(&self) -> f64 {
        mean(&self.reward_greedy)
    }

    pub fn mean_reward_sample(&self) -> f64 {
        mean(&self.reward_sample)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Decode greedily and by sampling, then score all four (question, text)
/// pairs per item in one scorer batch. An empty generated question gets
/// probability 0 on both sides without being sent to the scorer.
pub fn rollout<P: Policy>(
    policy: &P,
    items: &[RlItem<P::Input>],
    scorer: &dyn QaScorer,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, TrainingError> {
    let mut greedy = Vec::with_capacity(items.len());
    let mut sampled = Vec::with_capacity(items.len());
    for item in items {
        greedy.push(policy.greedy(item.input)?);
        sampled.push(policy.sample(item.input, rng)?);
    }
    // (context score, source score) slots per generation
    let mut requests = Vec::new();
    let mut slots: Vec<Option<(usize, usize)>> = Vec::new();
    for (item, gens) in items.iter().zip(greedy.iter().zip(&sampled)) {
        for g in [gens.0, gens.1] {
            if g.text.trim().is_empty() {
                slots.push(None);
            } else {
                requests.push((g.text.clone(), item.context.to_string()));
                requests.push((g.text.clone(), item.source.to_string()));
                slots.push(Some((requests.len() - 2, requests.len() - 1)));
            }
        }
    }
    let scores: Vec<QaScore> = if requests.is_empty() {
        Vec::new()
    } else {
        scorer
            .score_batch(&requests)
            .map_err(TrainingError::Scorer)?
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(TrainingError::Scorer)?
    };
    let rewards: Vec<f64> = slots
        .iter()
        .map(|slot| match slot {
            Some((c, s)) => reward_from_scores(&scores[*c], &scores[*s]),
            None => 0.0,
        })
        .collect();
    let reward_greedy = rewards.iter().step_by(2).copied().collect();
    let reward_sample = rewards.iter().skip(1).step_by(2).copied().collect();
    Ok(Rollout {
        greedy,
        sampled,
        reward_greedy,
        reward_sample,
    })
}

/// Self-critical REINFORCE loss for a fixed rollout:
/// `mean_b (r(Ŷ) - r(Y^s)) · Σ_t log p(y^s_t)`. Rewards enter as constants.
pub fn loss_rl_from_rollout<P: Policy>(
    policy: &P,
    inputs: &[&P::Input],
    rollout: &Rollout,
) -> Result<Tensor, TrainingError> {
    if inputs.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let sequences: Vec<Vec<u32>> = rollout.sampled.iter().map(|g| g.tokens.clone()).collect();
    let log_p = policy.sequence_log_probs(inputs, &sequences)?;
    let coeff: Vec<f64> = rollout
        .reward_greedy
        .iter()
        .zip(&rollout.reward_sample)
        .map(|(g, s)| g - s)
        .collect();
    let coeff = Tensor::from_vec(coeff, inputs.len(), log_p.device())?.to_dtype(log_p.dtype())?;
    Ok(((log_p * coeff)?.sum_all()? * (1.0 / inputs.len() as f64))?)
}

/// Roll out and compute the reinforcement loss.
pub fn loss_rl<P: Policy>(
    policy: &P,
    items: &[RlItem<P::Input>],
    scorer: &dyn QaScorer,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Rollout), TrainingError> {
    let rollout = rollout(policy, items, scorer, rng)?;
    let inputs: Vec<&P::Input> = items.iter().map(|i| i.input).collect();
    let loss = loss_rl_from_rollout(policy, &inputs, &rollout)?;
    Ok((loss, rollout))
}

pub fn check_gamma(gamma: f64) -> Result<(), TrainingError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(TrainingError::Config(format!(
            "gamma {gamma} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `γ · L_rl + (1 - γ) · L_ml`.
pub fn loss_mixed(loss_ml: &Tensor, loss_rl: &Tensor, gamma: f64) -> Result<Tensor, TrainingError> {
    check_gamma(gamma)?;
    Ok(((loss_rl * gamma)? + (loss_ml * (1.0 - gamma))?)?)
}

pub fn scalar(t: &Tensor) -> Result<f64, TrainingError> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};
    use rand::SeedableRng;

    /// Two single-token sequences with `p(0) = sigmoid(theta)`.
    struct Coin {
        theta: Var,
        words: [&'static str; 2],
    }

    impl Coin {
        fn p0(&self) -> f64 {
            1.0 / (1.0 + (-scalar(&self.theta.as_tensor().sum_all().unwrap()).unwrap()).exp())
        }
    }

    impl Policy for Coin {
        type Input = ();

        fn greedy(&self, _: &()) -> Result<Generated, TrainingError> {
            let id = if self.p0() >= 0.5 { 0 } else { 1 };
            Ok(Generated {
                tokens: vec![id],
                text: self.words[id as usize].into(),
            })
        }

        fn sample(&self, _: &(), rng: &mut ChaCha8Rng) -> Result<Generated, TrainingError> {
            use rand::Rng;
            let id = if rng.random::<f64>() < self.p0() {
                0
            } else {
                1
            };
            Ok(Generated {
                tokens: vec![id],
                text: self.words[id as usize].into(),
            })
        }

        fn sequence_log_probs(
            &self,
            inputs: &[&()],
            seqs: &[Vec<u32>],
        ) -> Result<Tensor, TrainingError> {
            let t = self.theta.as_tensor();
            let log_p0 = (t.neg()?.exp()? + 1.0)?.log()?.neg()?;
            let log_p1 = (t.exp()? + 1.0)?.log()?.neg()?;
            let rows: Vec<Tensor> = seqs
                .iter()
                .map(|s| {
                    if s[0] == 0 {
                        log_p0.clone()
                    } else {
                        log_p1.clone()
                    }
                })
                .collect();
            assert_eq!(inputs.len(), rows.len());
            Ok(Tensor::cat(&rows, 0)?)
        }
    }

    fn rollout_with(rg: f64, rs: f64, seq: u32) -> Rollout {
        let g = Generated {
            tokens: vec![seq],
            text: "x".into(),
        };
        Rollout {
            greedy: vec![g.clone()],
            sampled: vec![g],
            reward_greedy: vec![rg],
            reward_sample: vec![rs],
        }
    }

    fn coin(theta: f64) -> Coin {
        Coin {
            theta: Var::new(&[theta], &Device::Cpu).unwrap(),
            words: ["dane", "tesla"],
        }
    }

    #[test]
    fn equal_rewards_give_zero_loss() {
        let c = coin(0.3);
        let loss = loss_rl_from_rollout(&c, &[&()], &rollout_with(0.4, 0.4, 1)).unwrap();
        assert_eq!(scalar(&loss).unwrap(), 0.0);
    }

    #[test]
    fn rl_arithmetic() {
        // choose theta so that log p(seq 0) = -10
        let theta = -((10f64.exp() - 1.0).ln());
        let c = coin(theta);
        let lp = scalar(
            &c.sequence_log_probs(&[&()], &[vec![0]])
                .unwrap()
                .sum_all()
                .unwrap(),
        )
        .unwrap();
        assert!((lp + 10.0).abs() < 1e-9);
        let loss =
            scalar(&loss_rl_from_rollout(&c, &[&()], &rollout_with(0.2, 0.7, 0)).unwrap()).unwrap();
        assert!((loss - 5.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_arithmetic_and_gamma_bounds() {
        let dev = Device::Cpu;
        let ml = Tensor::new(2.0f64, &dev).unwrap();
        let rl = Tensor::new(4.0f64, &dev).unwrap();
        assert_eq!(scalar(&loss_mixed(&ml, &rl, 0.5).unwrap()).unwrap(), 3.0);
        assert_eq!(scalar(&loss_mixed(&ml, &rl, 0.0).unwrap()).unwrap(), 2.0);
        assert_eq!(scalar(&loss_mixed(&ml, &rl, 1.0).unwrap()).unwrap(), 4.0);
        assert!(loss_mixed(&ml, &rl, 1.5).is_err());
        assert!(loss_mixed(&ml, &rl, -0.1).is_err());
    }

    #[test]
    fn stub_rewards_for_the_coin() {
        let c = coin(0.3);
        let item = RlItem {
            input: &(),
            source: "tesla was the fourth child",
            context: "dane was killed in an accident",
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = rollout(&c, &[item], &crate::qa_scorer::StubScorer, &mut rng).unwrap();
        assert_eq!(r.greedy[0].text, "dane");
        assert_eq!(r.reward_greedy, vec![1.0]);
        let expected = if r.sampled[0].tokens[0] == 0 {
            1.0
        } else {
            -1.0
        };
        assert_eq!(r.reward_sample, vec![expected]);
    }
}
