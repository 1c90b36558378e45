use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use curiosity::corpus::import::{import_native, to_jsonl, NativeFormat};
use curiosity::corpus::{parse_records, Corpus, Origin, Split};
use curiosity::derivation::{
    derive_conversational, derive_standard, make_article_split, standard_qg_pairs,
    triplets_from_jsonl, triplets_to_jsonl, CuriosityTriplet, Derivation, DerivationStats,
    HeuristicTagger, SplitTable,
};

use crate::config::RunConfig;
use crate::{DeriveMode, ImportFormat};

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Directory holding a file output, for the run configuration.
pub fn parent_dir(path: &Path) -> &Path {
    path.parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

pub fn load_triplets(config: &RunConfig, path: &Path) -> Result<Vec<CuriosityTriplet>> {
    let path = config.input(path);
    triplets_from_jsonl(&read(&path)?)
        .map_err(|(line, e)| anyhow::anyhow!("{} line {line}: {e}", path.display()))
}

pub fn import(config: &RunConfig, format: ImportFormat, input: &Path, output: &Path) -> Result<()> {
    let (native, origin) = match format {
        ImportFormat::Squad => (NativeFormat::Squad, Origin::Standard),
        ImportFormat::Quac => (NativeFormat::Quac, Origin::Conversational),
    };
    let input = config.input(input);
    let (records, summary) = import_native(&read(&input)?, native)?;
    let jsonl = to_jsonl(&records);
    let (_, report) = parse_records(&jsonl, origin, Split::Train)?;
    write(output, &jsonl)?;
    config.write_to(parent_dir(output))?;
    eprintln!(
        "imported {} paragraphs, {} questions; {} without an answer, {} failing the span check",
        summary.paragraphs,
        summary.questions,
        summary.dropped,
        report.rejected()
    );
    Ok(())
}

fn load_corpus(config: &RunConfig, mode: DeriveMode, split: Split, input: &Path) -> Result<Corpus> {
    let origin = match mode {
        DeriveMode::Conversational => Origin::Conversational,
        DeriveMode::Standard => Origin::Standard,
    };
    let input = config.input(input);
    let (corpus, report) = parse_records(&read(&input)?, origin, split)?;
    if report.rejected() > 0 {
        eprintln!(
            "{}: {} of {} QA pairs rejected while loading",
            input.display(),
            report.rejected(),
            report.accepted + report.rejected()
        );
    }
    Ok(corpus)
}

fn derive_one(corpus: &Corpus, mode: DeriveMode, constrained: bool) -> Result<Derivation> {
    Ok(match mode {
        DeriveMode::Conversational => derive_conversational(corpus)?,
        DeriveMode::Standard => derive_standard(corpus, constrained, &HeuristicTagger)?,
    })
}

/// Writes `<split>.jsonl` per split (plus `qg_<split>.jsonl` on request),
/// `stats.csv`, `stats.json` and `stats.txt`.
pub fn derive(
    config: &RunConfig,
    mode: DeriveMode,
    constrained: bool,
    split: &str,
    qg_pairs: bool,
    input: &Path,
    output: &Path,
) -> Result<()> {
    let split: Split = split.parse()?;
    let corpus = load_corpus(config, mode, split, input)?;
    let holdout: usize = config.get("derive.holdout_articles")?;
    let parts = if holdout > 0 {
        let (rest, held) = make_article_split(&corpus, holdout, config.seed()?)?;
        vec![(split, rest), (Split::Validation, held)]
    } else {
        vec![(split, corpus)]
    };

    let label = match (mode, constrained) {
        (DeriveMode::Conversational, _) => "conversational",
        (DeriveMode::Standard, false) => "standard",
        (DeriveMode::Standard, true) => "standard_constrained",
    };
    let mut table = SplitTable::default();
    let mut stats: BTreeMap<String, DerivationStats> = BTreeMap::new();
    for (split, corpus) in &parts {
        let derivation = derive_one(corpus, mode, constrained)?;
        write(
            &output.join(format!("{split}.jsonl")),
            &triplets_to_jsonl(&derivation.triplets),
        )?;
        if qg_pairs {
            let pairs = standard_qg_pairs(corpus);
            write(
                &output.join(format!("qg_{split}.jsonl")),
                &triplets_to_jsonl(&pairs),
            )?;
            table.set("qg_pairs", *split, pairs.len());
        }
        let s = DerivationStats::from(&derivation);
        table.set("questions", *split, s.questions);
        table.set(label, *split, s.triplets);
        table.set("skipped_first_sentence", *split, s.skipped_first_sentence);
        table.set("skipped_empty_context", *split, s.skipped_empty_context);
        table.set("filtered_by_entities", *split, s.filtered_by_entities);
        eprintln!(
            "{split}: {} triplets from {} questions ({} first-sentence, {} empty-context, {} entity-filtered)",
            s.triplets, s.questions, s.skipped_first_sentence, s.skipped_empty_context, s.filtered_by_entities
        );
        stats.insert(split.to_string(), s);
    }
    write(&output.join("stats.csv"), &table.to_csv())?;
    write(&output.join("stats.txt"), &table.render())?;
    write(
        &output.join("stats.json"),
        &serde_json::to_string_pretty(&stats)?,
    )?;
    config.write_to(output)
}
