use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::MetricReport;

use super::correlation::CorrelationMatrix;
use super::ratings::{ratings_table_csv, RatingMeans};
use super::tokens::TokenHistogram;
use super::AnalysisError;

/// Everything an analysis run reports; absent parts are simply not written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub metrics: Vec<MetricReport>,
    pub rating_means: Vec<RatingMeans>,
    /// `(system, histogram)`.
    pub first_tokens: Vec<(String, TokenHistogram)>,
    /// `(system, prefix, rate)`.
    pub prefix_rates: Vec<(String, String, f64)>,
    pub correlation: Option<CorrelationMatrix>,
    /// Free-form lines appended to the report, e.g. skipped inputs.
    pub notes: Vec<String>,
}

fn file_stem(system: &str) -> String {
    system
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), AnalysisError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| AnalysisError::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Write `table_metrics.csv`, `table_ratings.csv`, `first_tokens_<system>.csv`,
/// `correlation.csv` (plus `correlation_pairs.csv`) and `report.md` into
/// `dir`, creating it if needed. Returns the paths written.
pub fn write_bundle(dir: &Path, bundle: &ReportBundle) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir).map_err(|e| AnalysisError::io(dir, e))?;
    let mut written = Vec::new();
    let mut md = String::from("# Analysis report\n");

    if !bundle.metrics.is_empty() {
        write(
            dir,
            "table_metrics.csv",
            &MetricReport::table_csv(&bundle.metrics),
            &mut written,
        )?;
        let _ = write!(
            md,
            "\n## Automatic metrics\n\n```\n{}```\n",
            MetricReport::render_table(&bundle.metrics)
        );
    }
    if !bundle.rating_means.is_empty() {
        let table = ratings_table_csv(&bundle.rating_means);
        write(dir, "table_ratings.csv", &table, &mut written)?;
        let _ = write!(md, "\n## Human ratings (means)\n\n```\n{table}```\n");
    }
    if !bundle.first_tokens.is_empty() {
        md.push_str("\n## First-token distributions\n");
        for (system, hist) in &bundle.first_tokens {
            write(
                dir,
                &format!("first_tokens_{}.csv", file_stem(system)),
                &hist.to_csv(),
                &mut written,
            )?;
            let _ = writeln!(md, "\n### {system} ({} questions)\n", hist.total_count);
            for (token, count, freq) in hist.rows() {
                let bar = "#".repeat((freq * 40.0).round() as usize);
                let _ = writeln!(
                    md,
                    "    {token:>12} {:>6.2}% {count:>6} {bar}",
                    freq * 100.0
                );
            }
        }
    }
    if !bundle.prefix_rates.is_empty() {
        md.push_str("\n## Prefix rates\n\n| system | prefix | rate |\n|---|---|---|\n");
        for (system, prefix, rate) in &bundle.prefix_rates {
            let _ = writeln!(md, "| {system} | {prefix} | {:.2}% |", rate * 100.0);
        }
    }
    if let Some(matrix) = &bundle.correlation {
        write(dir, "correlation.csv", &matrix.to_csv(), &mut written)?;
        write(
            dir,
            "correlation_pairs.csv",
            &matrix.to_pairs_csv(),
            &mut written,
        )?;
        let _ = write!(
            md,
            "\n## Spearman correlation\n\n`*` p < .05, `**` p < .005, `NA` undefined (constant column).\n\n```\n{}```\n",
            matrix.render_text()
        );
    }
    if !bundle.notes.is_empty() {
        md.push_str("\n## Notes\n\n");
        for note in &bundle.notes {
            let _ = writeln!(md, "- {note}");
        }
    }
    write(dir, "report.md", &md, &mut written)?;
    Ok(written)
}
