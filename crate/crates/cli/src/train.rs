use std::path::Path;

use anyhow::{Context, Result};
use curiosity::derivation::CuriosityTriplet;
use curiosity::model::{load_checkpoint, CopyTransformer, Vocabulary};
use curiosity::qa_scorer::QaScorer;
use curiosity::training::{
    greedy_bleu, pretrain_then_finetune, EncodedSet, Example, Objective, TrainReport, Trainer,
    TwoPhase,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{load_triplets, write};
use crate::TrainArgs;

fn examples(triplets: &[CuriosityTriplet]) -> Vec<Example> {
    triplets.iter().map(Example::from).collect()
}

fn build_model(config: &RunConfig, corpora: &[&[Example]]) -> Result<CopyTransformer> {
    let texts = corpora
        .iter()
        .flat_map(|c| c.iter())
        .flat_map(|e| [e.source.as_str(), e.target.as_str()]);
    let vocab = Vocabulary::build(
        texts,
        config.get("vocab.min_freq")?,
        config.get("vocab.max_size")?,
    );
    let model_config = config.model_config(vocab.len())?;
    Ok(CopyTransformer::new(model_config, vocab)?)
}

fn optional_examples(config: &RunConfig, path: Option<&Path>) -> Result<Vec<Example>> {
    match path {
        Some(p) => Ok(examples(&load_triplets(config, p)?)),
        None => Ok(Vec::new()),
    }
}

fn report_skips(report: &TrainReport) {
    if report.skipped_batches > 0 {
        eprintln!(
            "{} batches skipped after scorer failures",
            report.skipped_batches
        );
    }
}

/// Final greedy BLEU-4 on the training and validation sets, also written to
/// `summary.json`.
fn summarize(
    model: &CopyTransformer,
    train: &EncodedSet,
    val: &EncodedSet,
    report: &TrainReport,
    out: &Path,
) -> Result<()> {
    let train_bleu = greedy_bleu(model, train, 4)?;
    let val_bleu = greedy_bleu(model, val, 4)?;
    let summary = json!({
        "steps": report.state.step,
        "epochs": report.epochs.len(),
        "stopped_early": report.state.stopped_early,
        "final_epoch_loss": report.epochs.last().map(|e| e.mean_loss),
        "best_val_loss": report.state.best_val_loss,
        "skipped_batches": report.skipped_batches,
        "train_bleu4": train_bleu,
        "val_bleu4": val_bleu,
    });
    write(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    eprintln!(
        "{} steps; final BLEU-4 train {} / validation {}",
        report.state.step,
        train_bleu.map_or("-".into(), |b| format!("{:.4}", b)),
        val_bleu.map_or("-".into(), |b| format!("{:.4}", b)),
    );
    report_skips(report);
    Ok(())
}

fn run_training(
    config: &RunConfig,
    model: &CopyTransformer,
    resume: Option<&curiosity::model::LoadedCheckpoint>,
    train: &[Example],
    val: &[Example],
    objective: &Objective,
    out: &Path,
) -> Result<()> {
    let train_set = EncodedSet::new(model, train);
    let val_set = EncodedSet::new(model, val);
    let train_config = config.train_config()?;
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(
            model,
            train_config,
            &ck.state,
            ck.optimizer.as_ref(),
            Some(out),
        )?,
        None => Trainer::new(model, train_config, Some(out))?,
    };
    let report = trainer.train(&train_set, &val_set, objective)?;
    summarize(model, &train_set, &val_set, &report, out)
}

fn load(path: &Path) -> Result<curiosity::model::LoadedCheckpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn supervised(config: &RunConfig, args: &TrainArgs) -> Result<()> {
    let train = examples(&load_triplets(config, &args.train)?);
    let val = optional_examples(config, args.val.as_deref())?;
    config.write_to(&args.output)?;
    let resumed = args.resume.as_deref().map(load).transpose()?;
    let fresh;
    let model = match &resumed {
        Some(ck) => &ck.model,
        None => {
            fresh = build_model(config, &[&train])?;
            &fresh
        }
    };
    run_training(
        config,
        model,
        resumed.as_ref(),
        &train,
        &val,
        &Objective::Supervised,
        &args.output,
    )
}

pub fn rl_finetune(config: &RunConfig, init: &Path, args: &TrainArgs) -> Result<()> {
    config.train_config()?;
    let train = examples(&load_triplets(config, &args.train)?);
    let val = optional_examples(config, args.val.as_deref())?;
    let scorer: Box<dyn QaScorer> = config.scorer()?;
    config.write_to(&args.output)?;
    let (ck, resumed) = match &args.resume {
        Some(path) => (load(path)?, true),
        None => (load(init)?, false),
    };
    let objective = Objective::Mixed(scorer.as_ref());
    run_training(
        config,
        &ck.model,
        resumed.then_some(&ck),
        &train,
        &val,
        &objective,
        &args.output,
    )
}

pub fn pretrain_finetune(
    config: &RunConfig,
    standard_train: &Path,
    standard_val: Option<&Path>,
    rl: bool,
    skip_pretraining: bool,
    args: &TrainArgs,
) -> Result<()> {
    if args.resume.is_some() {
        anyhow::bail!(
            "pretrain-finetune does not resume; resume phase 2 with rl-finetune or train --resume"
        );
    }
    let finetune_config = config.train_config()?;
    let pretrain_config = config.pretrain_config()?;
    let std_train = examples(&load_triplets(config, standard_train)?);
    let std_val = optional_examples(config, standard_val)?;
    let train = examples(&load_triplets(config, &args.train)?);
    let val = optional_examples(config, args.val.as_deref())?;
    let scorer = if rl { Some(config.scorer()?) } else { None };
    config.write_to(&args.output)?;

    let model = build_model(config, &[&std_train, &train])?;
    let sets = [&std_train, &std_val, &train, &val].map(|e| EncodedSet::new(&model, e));
    let objective = match &scorer {
        Some(s) => Objective::Mixed(s.as_ref()),
        None => Objective::Supervised,
    };
    let report = pretrain_then_finetune(
        &model,
        TwoPhase {
            standard_train: &sets[0],
            standard_val: &sets[1],
            curiosity_train: &sets[2],
            curiosity_val: &sets[3],
            pretrain_config,
            finetune_config,
            skip_pretraining,
        },
        &objective,
        Some(&args.output),
    )?;
    if let Some(p) = &report.pretrain {
        report_skips(p);
    }
    summarize(&model, &sets[2], &sets[3], &report.finetune, &args.output)
}
