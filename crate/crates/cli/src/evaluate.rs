use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use curiosity::analysis::{
    beam_divergence_report, correlation_inputs, correlation_matrix, first_token_histogram,
    load_ratings, prefix_rate, system_means, write_bundle, BeamInput, Granularity, ReportBundle,
    SystemItems,
};
use curiosity::derivation::CuriosityTriplet;
use curiosity::metrics::{evaluate_system, EvalItem, Evaluation, MetricReport};
use curiosity::model::{load_checkpoint, DecodeMode};
use curiosity::qa_scorer::QaScorer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{load_triplets, parent_dir, read, write};
use crate::AnalyzeArgs;

/// One line of a generations file. `id` is the triplet's line index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub text: String,
    pub log_prob: f64,
    pub decode_mode: DecodeMode,
    pub k: usize,
}

pub fn generate(
    config: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    mode: Option<&str>,
    k: Option<usize>,
) -> Result<()> {
    let mut config = config.clone();
    if let Some(mode) = mode {
        config.set("decode.mode", mode)?;
    }
    if let Some(k) = k {
        config.set("decode.k", &k.to_string())?;
    }
    let mode = config.decode_mode()?;
    let k: usize = config.get("decode.k")?;
    let seed = config.seed()?;
    let ck = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let model = &ck.model;
    let max_len: usize = config
        .get_opt("decode.max_len")?
        .unwrap_or(model.config().max_target_len);
    let triplets = load_triplets(&config, input)?;
    let records = triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let source = model.encode_source(&t.source);
            let g = model.generate(&source, mode, k, max_len, seed.wrapping_add(i as u64))?;
            Ok(GenerationRecord {
                id: i.to_string(),
                text: g.text,
                log_prob: g.log_prob,
                decode_mode: g.decode_mode,
                k: g.beam_size,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write(output, &out)?;
    config.write_to(parent_dir(output))?;
    eprintln!("generated {} questions ({mode:?}, k={k})", records.len());
    Ok(())
}

fn parse_system(spec: &str) -> Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("--system expects NAME=PATH, got `{spec}`"))?;
    if name.is_empty() {
        bail!("--system `{spec}` has an empty name");
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn load_generations(config: &RunConfig, path: &Path) -> Result<Vec<GenerationRecord>> {
    let path = config.input(path);
    read(&path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect()
}

/// Pair generations with their triplets by id. Unknown ids are an error;
/// triplets without a generation are left out and counted on stderr.
fn eval_items(
    name: &str,
    triplets: &[CuriosityTriplet],
    generations: &[GenerationRecord],
) -> Result<Vec<EvalItem>> {
    let mut hyps: Vec<Option<&str>> = vec![None; triplets.len()];
    for g in generations {
        let index: usize =
            g.id.parse()
                .ok()
                .filter(|&i| i < triplets.len())
                .ok_or_else(|| anyhow!("{name}: generation id `{}` matches no triplet", g.id))?;
        hyps[index] = Some(&g.text);
    }
    let missing = hyps.iter().filter(|h| h.is_none()).count();
    if missing > 0 {
        eprintln!(
            "{name}: {missing} of {} triplets have no generation and are skipped",
            triplets.len()
        );
    }
    Ok(triplets
        .iter()
        .zip(hyps)
        .enumerate()
        .filter_map(|(i, (t, h))| {
            h.map(|h| EvalItem {
                id: i.to_string(),
                hypothesis: h.to_string(),
                reference: t.target.clone(),
                source: t.source.clone(),
                context: t.context.clone(),
            })
        })
        .collect())
}

struct SystemRun {
    name: String,
    generations: Vec<String>,
    evaluation: Evaluation,
}

fn evaluate_systems(
    config: &RunConfig,
    triplets: &[CuriosityTriplet],
    specs: &[String],
    scorer: &dyn QaScorer,
) -> Result<Vec<SystemRun>> {
    let eval_config = config.eval_config()?;
    specs
        .iter()
        .map(|spec| {
            let (name, path) = parse_system(spec)?;
            let generations = load_generations(config, &path)?;
            let items = eval_items(&name, triplets, &generations)?;
            let evaluation = evaluate_system(&name, &items, scorer, &eval_config)?;
            Ok(SystemRun {
                generations: items.into_iter().map(|i| i.hypothesis).collect(),
                name,
                evaluation,
            })
        })
        .collect()
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `table_metrics.csv`, `table_metrics.txt`, `metrics.json` and
/// `items_<system>.jsonl`.
pub fn evaluate(config: &RunConfig, input: &Path, systems: &[String], output: &Path) -> Result<()> {
    let triplets = load_triplets(config, input)?;
    let scorer = config.scorer()?;
    let runs = evaluate_systems(config, &triplets, systems, scorer.as_ref())?;
    let reports: Vec<MetricReport> = runs.iter().map(|r| r.evaluation.report.clone()).collect();
    write(
        &output.join("table_metrics.csv"),
        &MetricReport::table_csv(&reports),
    )?;
    write(
        &output.join("table_metrics.txt"),
        &MetricReport::render_table(&reports),
    )?;
    write(
        &output.join("metrics.json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    for r in &runs {
        write(
            &output.join(format!("items_{}.jsonl", file_stem(&r.name))),
            &jsonl(&r.evaluation.items)?,
        )?;
    }
    config.write_to(output)?;
    print!("{}", MetricReport::render_table(&reports));
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn analyze(config: &RunConfig, args: &AnalyzeArgs) -> Result<()> {
    if args.systems.is_empty() && args.checkpoint.is_none() {
        bail!("analyze needs at least one --system or a --checkpoint");
    }
    let triplets = load_triplets(config, &args.input)?;
    let scorer = config.scorer()?;
    let top_k: usize = config.get("analysis.top_k")?;
    let prefix = config.value("analysis.prefix");
    let granularity = match config.value("analysis.granularity").as_str() {
        "per_item" => Granularity::PerItem,
        "per_system_mean" => Granularity::PerSystemMean,
        other => bail!("analysis.granularity: expected per_item or per_system_mean, got `{other}`"),
    };

    let mut bundle = ReportBundle::default();
    let runs = evaluate_systems(config, &triplets, &args.systems, scorer.as_ref())?;
    let mut texts: Vec<(String, Vec<String>)> = vec![(
        "reference".to_string(),
        triplets.iter().map(|t| t.target.clone()).collect(),
    )];
    for r in &runs {
        bundle.metrics.push(r.evaluation.report.clone());
        texts.push((r.name.clone(), r.generations.clone()));
    }

    if let Some(path) = &args.checkpoint {
        let ck = load_checkpoint(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        let inputs = BeamInput::from_triplets(&triplets);
        let beams = config.beams()?;
        let divergence = beam_divergence_report(
            &ck.model,
            &inputs,
            &beams,
            scorer.as_ref(),
            &config.eval_config()?,
        )?;
        write(
            &args.output.join("table_beams.csv"),
            &divergence.table_csv(),
        )?;
        for column in &divergence.columns {
            bundle.metrics.push(column.evaluation.report.clone());
            texts.push((
                column.evaluation.report.system_name.clone(),
                column.generations.iter().map(|g| g.text.clone()).collect(),
            ));
        }
    }

    for (name, questions) in &texts {
        if questions.is_empty() {
            bundle.notes.push(format!("{name}: no questions"));
            continue;
        }
        bundle
            .first_tokens
            .push((name.clone(), first_token_histogram(questions, top_k)?));
        bundle.prefix_rates.push((
            name.clone(),
            prefix.clone(),
            prefix_rate(questions, &prefix)?,
        ));
    }

    if let Some(path) = &args.ratings {
        let ratings = load_ratings(&config.input(path))?;
        bundle.rating_means = system_means(&ratings);
        let systems: Vec<SystemItems> = runs
            .iter()
            .map(|r| SystemItems {
                system_name: r.name.clone(),
                items: r.evaluation.items.clone(),
            })
            .collect();
        let (metrics, human, unmatched) = correlation_inputs(&systems, &ratings, granularity);
        if unmatched > 0 {
            eprintln!("{unmatched} ratings have no matching generation and are left out of the correlation");
            bundle
                .notes
                .push(format!("{unmatched} ratings without a matching generation were left out of the correlation"));
        }
        match correlation_matrix(&metrics, &human) {
            Ok(m) => bundle.correlation = Some(m),
            Err(e) => bundle.notes.push(format!("correlation not computed: {e}")),
        }
    }

    write_bundle(&args.output, &bundle)?;
    config.write_to(&args.output)?;
    eprintln!(
        "report written to {}",
        args.output.join("report.md").display()
    );
    Ok(())
}
