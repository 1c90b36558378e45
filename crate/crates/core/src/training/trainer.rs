use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::corpus_bleu;
use crate::model::{save_checkpoint, CopyTransformer, SourceEncoding};
use crate::qa_scorer::QaScorer;
use crate::text::metric_tokens;

use super::adam::{Adam, AdamConfig};
use super::batch::{EncodedExample, EncodedSet, TrainingBatch};
use super::history::{LogRow, MetricsLog, RowKind};
use super::loss::{check_gamma, loss_mixed, loss_ml, loss_rl, scalar, RlItem};
use super::TrainingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub gamma: f64,
    pub epochs: usize,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
    /// Save `last/` every this many steps; 0 saves at epoch ends only.
    pub checkpoint_every: usize,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
    /// Greedy-decode the validation set each epoch for BLEU-4.
    pub eval_bleu: bool,
    /// Stop (and checkpoint) once the global step count reaches this value.
    pub max_steps: Option<usize>,
    /// Abort instead of skipping a batch when the scorer fails.
    pub abort_on_scorer_error: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            adam: AdamConfig::default(),
            gamma: 0.99,
            epochs: 50,
            grad_clip_norm: Some(1.0),
            seed: 0,
            checkpoint_every: 0,
            patience: Some(5),
            eval_bleu: true,
            max_steps: None,
            abort_on_scorer_error: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        check_gamma(self.gamma)?;
        if self.batch_size == 0 {
            return Err(TrainingError::Config(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(TrainingError::Config(format!(
                "learning rate {} must be positive",
                self.adam.lr
            )));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(TrainingError::Config(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        if let Some(c) = self.grad_clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(TrainingError::Config(format!(
                    "grad_clip_norm {c} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Resumable position in the schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub phase: String,
    pub step: usize,
    pub epoch: usize,
    /// Next batch to run within `epoch`.
    pub batch_in_epoch: usize,
    pub adam_steps: u64,
    pub best_val_loss: Option<f64>,
    pub bad_epochs: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointState {
    train: TrainState,
    config: TrainConfig,
    #[serde(default)]
    tag: Option<String>,
}

pub enum Objective<'s> {
    Supervised,
    /// `γ·L_rl + (1-γ)·L_ml` with rewards from the scorer; γ from the config.
    Mixed(&'s dyn QaScorer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_loss_ml: f64,
    pub mean_loss_rl: Option<f64>,
    pub mean_reward_greedy: Option<f64>,
    pub mean_reward_sample: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_bleu4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochSummary>,
    pub skipped_batches: usize,
    pub state: TrainState,
}

#[derive(Default)]
struct EpochAccumulator {
    loss: Vec<f64>,
    loss_ml: Vec<f64>,
    loss_rl: Vec<f64>,
    reward_greedy: Vec<f64>,
    reward_sample: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Data order for an epoch, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Sampling stream for the rollout at `step`.
fn rollout_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(step as u64);
    rng
}

enum StepOutcome {
    Done {
        loss: f64,
        loss_ml: f64,
        loss_rl: Option<f64>,
        rewards: Option<(f64, f64)>,
        grad_norm: f64,
    },
    Skipped,
}

pub struct Trainer<'m> {
    model: &'m CopyTransformer,
    config: TrainConfig,
    adam: Adam,
    state: TrainState,
    out_dir: Option<PathBuf>,
    log: MetricsLog,
}

impl<'m> Trainer<'m> {
    /// With `out_dir`, checkpoints go to `out_dir/{last,best}` and the log is
    /// appended to `out_dir/metrics.csv`.
    pub fn new(
        model: &'m CopyTransformer,
        config: TrainConfig,
        out_dir: Option<&Path>,
    ) -> Result<Self, TrainingError> {
        let log = match out_dir {
            Some(dir) => MetricsLog::open(&dir.join("metrics.csv"))?,
            None => MetricsLog::in_memory(),
        };
        Self::with_log(model, config, out_dir, log)
    }

    pub fn with_log(
        model: &'m CopyTransformer,
        config: TrainConfig,
        out_dir: Option<&Path>,
        log: MetricsLog,
    ) -> Result<Self, TrainingError> {
        config.validate()?;
        Ok(Self {
            model,
            adam: Adam::new(config.adam),
            config,
            state: TrainState {
                phase: "train".into(),
                ..Default::default()
            },
            out_dir: out_dir.map(Path::to_path_buf),
            log,
        })
    }

    /// Continue from a checkpoint's training state and optimizer moments.
    /// `config` may differ from the saved one (e.g. more epochs).
    pub fn resume(
        model: &'m CopyTransformer,
        config: TrainConfig,
        state: &serde_json::Value,
        optimizer: Option<&HashMap<String, Tensor>>,
        out_dir: Option<&Path>,
    ) -> Result<Self, TrainingError> {
        let saved: CheckpointState = serde_json::from_value(state.clone())
            .map_err(|e| TrainingError::Checkpoint(format!("training state: {e}")))?;
        let mut trainer = Self::new(model, config, out_dir)?;
        trainer.adam = match optimizer {
            Some(t) => Adam::from_state(
                trainer.config.adam,
                saved.train.adam_steps,
                t,
                model.dtype(),
            )?,
            None if saved.train.adam_steps == 0 => Adam::new(trainer.config.adam),
            None => return Err(TrainingError::Checkpoint("optimizer state missing".into())),
        };
        trainer.state = saved.train;
        trainer.state.stopped_early = false;
        Ok(trainer)
    }

    pub fn set_phase(&mut self, phase: &str) {
        self.state.phase = phase.to_string();
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn into_log(self) -> MetricsLog {
        self.log
    }

    fn checkpoint_state(&self, tag: Option<&str>) -> serde_json::Value {
        let mut train = self.state.clone();
        train.adam_steps = self.adam.steps_taken();
        serde_json::to_value(CheckpointState {
            train,
            config: self.config.clone(),
            tag: tag.map(String::from),
        })
        .expect("state serializes")
    }

    pub fn save(&self, dir: &Path, tag: Option<&str>) -> Result<(), TrainingError> {
        let optimizer = self.adam.state_tensors();
        save_checkpoint(
            dir,
            self.model,
            &self.checkpoint_state(tag),
            Some(&optimizer),
        )?;
        Ok(())
    }

    fn save_named(&self, name: &str) -> Result<(), TrainingError> {
        if let Some(out) = &self.out_dir {
            self.save(&out.join(name), Some(name))?;
        }
        Ok(())
    }

    fn diagnostic(&self, batch: &[usize], loss_ml: f64, loss_rl: Option<f64>) -> TrainingError {
        if let Some(out) = &self.out_dir {
            let dump = serde_json::json!({
                "state": self.checkpoint_state(None),
                "batch_indices": batch,
                "loss_ml": loss_ml.to_string(),
                "loss_rl": loss_rl.map(|v| v.to_string()),
            });
            let path = out.join("diagnostic.json");
            if let Err(e) = fs::write(&path, serde_json::to_string_pretty(&dump).expect("json")) {
                warn!("could not write {}: {e}", path.display());
            }
        }
        TrainingError::NonFiniteLoss {
            step: self.state.step,
            loss_ml,
            loss_rl,
        }
    }

    fn run_step(
        &mut self,
        items: &[&EncodedExample],
        indices: &[usize],
        objective: &Objective,
    ) -> Result<StepOutcome, TrainingError> {
        let batch = TrainingBatch::new(self.model, items);
        let ml = loss_ml(self.model, &batch)?;
        let ml_value = scalar(&ml)?;
        let (loss, rl_value, rewards) = match objective {
            Objective::Supervised => (ml, None, None),
            Objective::Mixed(scorer) => {
                let rl_items: Vec<RlItem<SourceEncoding>> = items
                    .iter()
                    .map(|e| RlItem {
                        input: &e.source,
                        source: &e.example.source,
                        context: &e.example.context,
                    })
                    .collect();
                let mut rng = rollout_rng(self.config.seed, self.state.step);
                match loss_rl(self.model, &rl_items, *scorer, &mut rng) {
                    Ok((rl, rollout)) => {
                        let rl_value = scalar(&rl)?;
                        let rewards = (rollout.mean_reward_greedy(), rollout.mean_reward_sample());
                        (
                            loss_mixed(&ml, &rl, self.config.gamma)?,
                            Some(rl_value),
                            Some(rewards),
                        )
                    }
                    Err(TrainingError::Scorer(e)) if !self.config.abort_on_scorer_error => {
                        warn!(
                            "step {}: scorer failed, batch skipped: {e}",
                            self.state.step
                        );
                        return Ok(StepOutcome::Skipped);
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let loss_value = scalar(&loss)?;
        if !loss_value.is_finite()
            || !ml_value.is_finite()
            || rl_value.is_some_and(|v| !v.is_finite())
        {
            return Err(self.diagnostic(indices, ml_value, rl_value));
        }
        let grads = loss.backward()?;
        let info = match self.adam.step(
            self.model.params().iter(),
            &grads,
            self.config.grad_clip_norm,
        ) {
            Ok(info) => info,
            Err(TrainingError::NonFiniteGradient) => {
                return Err(self.diagnostic(indices, ml_value, rl_value))
            }
            Err(e) => return Err(e),
        };
        Ok(StepOutcome::Done {
            loss: loss_value,
            loss_ml: ml_value,
            loss_rl: rl_value,
            rewards,
            grad_norm: info.grad_norm,
        })
    }

    /// Mean teacher-forced loss over `set`, `None` when empty.
    pub fn validation_loss(&self, set: &EncodedSet) -> Result<Option<f64>, TrainingError> {
        if set.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for chunk in set.examples.chunks(self.config.batch_size) {
            let items: Vec<&EncodedExample> = chunk.iter().collect();
            let loss = loss_ml(self.model, &TrainingBatch::new(self.model, &items))?;
            total += scalar(&loss)? * chunk.len() as f64;
        }
        Ok(Some(total / set.len() as f64))
    }

    /// Corpus BLEU-4 of greedy decodes against the targets.
    pub fn greedy_bleu4(&self, set: &EncodedSet) -> Result<Option<f64>, TrainingError> {
        greedy_bleu(self.model, set, 4)
    }

    fn log_row(&mut self, row: LogRow) -> Result<(), TrainingError> {
        self.log.push(row)
    }

    pub fn log_phase(&mut self, phase: &str) -> Result<(), TrainingError> {
        self.set_phase(phase);
        let row = LogRow::new(RowKind::Phase, phase, self.state.epoch, self.state.step);
        self.log_row(row)
    }

    /// Run the schedule from the current state until `epochs`, `max_steps`
    /// or early stopping.
    pub fn train(
        &mut self,
        train: &EncodedSet,
        val: &EncodedSet,
        objective: &Objective,
    ) -> Result<TrainReport, TrainingError> {
        if train.is_empty() {
            return Err(TrainingError::EmptyTrainingSet);
        }
        train.check_vocab(self.model)?;
        val.check_vocab(self.model)?;
        if val.is_empty() {
            warn!("validation set is empty; validation skipped");
        }
        let n = train.len();
        let bs = self.config.batch_size;
        let batches = n.div_ceil(bs);
        let mut report = TrainReport::default();
        while self.state.epoch < self.config.epochs && !self.state.stopped_early {
            let order = epoch_order(n, self.config.seed, self.state.epoch);
            let mut acc = EpochAccumulator::default();
            while self.state.batch_in_epoch < batches {
                if self.config.max_steps.is_some_and(|m| self.state.step >= m) {
                    self.save_named("last")?;
                    report.state = self.state.clone();
                    return Ok(report);
                }
                let b = self.state.batch_in_epoch;
                let indices = &order[b * bs..((b + 1) * bs).min(n)];
                let items: Vec<&EncodedExample> =
                    indices.iter().map(|&i| &train.examples[i]).collect();
                let outcome = self.run_step(&items, indices, objective)?;
                let mut row = LogRow::new(
                    RowKind::Step,
                    &self.state.phase,
                    self.state.epoch,
                    self.state.step,
                );
                match outcome {
                    StepOutcome::Done {
                        loss,
                        loss_ml,
                        loss_rl,
                        rewards,
                        grad_norm,
                    } => {
                        report.step_losses.push(loss);
                        acc.loss.push(loss);
                        acc.loss_ml.push(loss_ml);
                        acc.loss_rl.extend(loss_rl);
                        if let Some((g, s)) = rewards {
                            acc.reward_greedy.push(g);
                            acc.reward_sample.push(s);
                        }
                        row.loss = Some(loss);
                        row.loss_ml = Some(loss_ml);
                        row.loss_rl = loss_rl;
                        row.reward_greedy = rewards.map(|r| r.0);
                        row.reward_sample = rewards.map(|r| r.1);
                        row.grad_norm = Some(grad_norm);
                    }
                    StepOutcome::Skipped => {
                        report.skipped_batches += 1;
                        row.kind = RowKind::Skipped;
                    }
                }
                self.log_row(row)?;
                self.state.step += 1;
                self.state.batch_in_epoch += 1;
                if self.config.checkpoint_every > 0
                    && self.state.step.is_multiple_of(self.config.checkpoint_every)
                {
                    self.save_named("last")?;
                }
            }
            let epoch = self.state.epoch;
            self.state.epoch += 1;
            self.state.batch_in_epoch = 0;

            let val_loss = self.validation_loss(val)?;
            let val_bleu4 = if self.config.eval_bleu {
                self.greedy_bleu4(val)?
            } else {
                None
            };
            let summary = EpochSummary {
                epoch,
                mean_loss: mean(&acc.loss).unwrap_or(f64::NAN),
                mean_loss_ml: mean(&acc.loss_ml).unwrap_or(f64::NAN),
                mean_loss_rl: mean(&acc.loss_rl),
                mean_reward_greedy: mean(&acc.reward_greedy),
                mean_reward_sample: mean(&acc.reward_sample),
                val_loss,
                val_bleu4,
            };
            let mut row = LogRow::new(RowKind::Epoch, &self.state.phase, epoch, self.state.step);
            row.loss = mean(&acc.loss);
            row.loss_ml = mean(&acc.loss_ml);
            row.loss_rl = summary.mean_loss_rl;
            row.reward_greedy = summary.mean_reward_greedy;
            row.reward_sample = summary.mean_reward_sample;
            row.val_loss = val_loss;
            row.val_bleu4 = val_bleu4;
            self.log_row(row)?;
            info!(
                "{} epoch {epoch}: loss {:.4}, val {:?}",
                self.state.phase, summary.mean_loss, summary.val_loss
            );
            report.epochs.push(summary);

            if let Some(v) = val_loss {
                if self.state.best_val_loss.is_none_or(|best| v < best) {
                    self.state.best_val_loss = Some(v);
                    self.state.bad_epochs = 0;
                    self.save_named("best")?;
                } else {
                    self.state.bad_epochs += 1;
                    if self
                        .config
                        .patience
                        .is_some_and(|p| self.state.bad_epochs >= p)
                    {
                        info!(
                            "early stop after {} epochs without improvement",
                            self.state.bad_epochs
                        );
                        self.state.stopped_early = true;
                    }
                }
            }
            self.save_named("last")?;
        }
        report.state = self.state.clone();
        Ok(report)
    }
}

/// Corpus BLEU-n of greedy decodes over `set`, `None` when empty.
pub fn greedy_bleu(
    model: &CopyTransformer,
    set: &EncodedSet,
    n: usize,
) -> Result<Option<f64>, TrainingError> {
    if set.is_empty() {
        return Ok(None);
    }
    let mut hyps = Vec::with_capacity(set.len());
    let mut refs = Vec::with_capacity(set.len());
    for e in &set.examples {
        let g = model.greedy_decode(&e.source, model.config().max_target_len)?;
        hyps.push(metric_tokens(&g.text));
        refs.push(metric_tokens(&e.example.target));
    }
    Ok(Some(
        corpus_bleu(&hyps, &refs, n).map_err(|e| TrainingError::Config(e.to_string()))?,
    ))
}
