use std::path::Path;

use crate::model::CopyTransformer;

use super::batch::EncodedSet;
use super::history::MetricsLog;
use super::trainer::{Objective, TrainConfig, TrainReport, Trainer};
use super::TrainingError;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub pretrain: Option<TrainReport>,
    pub finetune: TrainReport,
}

/// Datasets and schedules for the two-phase run.
pub struct TwoPhase<'a> {
    /// Standard question-generation pairs (source = answer sentence).
    pub standard_train: &'a EncodedSet,
    pub standard_val: &'a EncodedSet,
    pub curiosity_train: &'a EncodedSet,
    pub curiosity_val: &'a EncodedSet,
    pub pretrain_config: TrainConfig,
    pub finetune_config: TrainConfig,
    pub skip_pretraining: bool,
}

/// Phase 1 trains on standard pairs; phase 2 continues from those weights
/// with a fresh optimizer on curiosity triplets. Both phases append to one
/// metrics log with a `phase` row at each boundary; phase-1 checkpoints go
/// to `out_dir/pretrain`.
pub fn pretrain_then_finetune(
    model: &CopyTransformer,
    data: TwoPhase,
    objective: &Objective,
    out_dir: Option<&Path>,
) -> Result<PretrainReport, TrainingError> {
    for set in [
        data.standard_train,
        data.standard_val,
        data.curiosity_train,
        data.curiosity_val,
    ] {
        set.check_vocab(model)?;
    }
    let mut log = match out_dir {
        Some(dir) => MetricsLog::open(&dir.join("metrics.csv"))?,
        None => MetricsLog::in_memory(),
    };
    let mut pretrain = None;
    if !data.skip_pretraining {
        let dir = out_dir.map(|d| d.join("pretrain"));
        let mut trainer = Trainer::with_log(model, data.pretrain_config, dir.as_deref(), log)?;
        trainer.log_phase("pretrain")?;
        pretrain = Some(trainer.train(
            data.standard_train,
            data.standard_val,
            &Objective::Supervised,
        )?);
        log = trainer.into_log();
    }
    let mut trainer = Trainer::with_log(model, data.finetune_config, out_dir, log)?;
    if !data.skip_pretraining {
        trainer.log_phase("finetune")?;
    }
    let finetune = trainer.train(data.curiosity_train, data.curiosity_val, objective)?;
    Ok(PretrainReport { pretrain, finetune })
}
