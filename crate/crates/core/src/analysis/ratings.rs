use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokens::csv_field;
use super::AnalysisError;

/// Core rating dimensions, in table order.
pub const RATING_DIMENSIONS: [&str; 5] = [
    "answerability",
    "correctness",
    "external_knowledge",
    "relevance",
    "soundness",
];

/// One annotator judgement of one generated question on a 1-5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRatingRecord {
    pub sample_id: String,
    pub system_name: String,
    pub answerability: u8,
    pub correctness: u8,
    pub external_knowledge: u8,
    pub relevance: u8,
    pub soundness: u8,
    /// Additional numeric columns present in the file, keyed by header.
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl HumanRatingRecord {
    /// Core ratings in [`RATING_DIMENSIONS`] order.
    pub fn core(&self) -> [u8; 5] {
        [
            self.answerability,
            self.correctness,
            self.external_knowledge,
            self.relevance,
            self.soundness,
        ]
    }
}

/// Mean ratings of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMeans {
    pub system_name: String,
    pub count: usize,
    /// Means in [`RATING_DIMENSIONS`] order.
    pub means: [f64; 5],
}

pub fn load_ratings(path: &Path) -> Result<Vec<HumanRatingRecord>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::io(path, e))?;
    parse_ratings(&text)
}

fn rating_error(line: usize, message: impl Into<String>) -> AnalysisError {
    AnalysisError::Rating {
        line,
        message: message.into(),
    }
}

/// Parse a ratings CSV. Columns are located by header name; every column
/// beyond the seven required ones is read as an optional numeric extra.
pub fn parse_ratings(text: &str) -> Result<Vec<HumanRatingRecord>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| rating_error(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| rating_error(1, format!("missing column {name}")))
    };
    let id_col = find("sample_id")?;
    let system_col = find("system")?;
    let dim_cols = RATING_DIMENSIONS.map(find);
    let dim_cols: Vec<usize> = dim_cols.into_iter().collect::<Result<_, _>>()?;
    let known: Vec<usize> = [id_col, system_col]
        .into_iter()
        .chain(dim_cols.iter().copied())
        .collect();
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            rating_error(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("");
        let sample_id = field(id_col);
        if sample_id.is_empty() {
            return Err(rating_error(line, "empty sample_id"));
        }
        let system = field(system_col);
        if system.is_empty() {
            return Err(rating_error(line, "empty system"));
        }
        let mut core = [0u8; 5];
        for (slot, (&col, name)) in core.iter_mut().zip(dim_cols.iter().zip(RATING_DIMENSIONS)) {
            let raw = field(col);
            *slot = match raw.parse::<u8>() {
                Ok(v) if (1..=5).contains(&v) => v,
                _ => {
                    return Err(rating_error(
                        line,
                        format!("{name} = {raw:?} is not an integer in 1..=5"),
                    ))
                }
            };
        }
        let mut extra = BTreeMap::new();
        for (col, name) in &extra_cols {
            let raw = field(*col);
            if raw.is_empty() {
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    extra.insert(name.clone(), v);
                }
                _ => {
                    return Err(rating_error(
                        line,
                        format!("{name} = {raw:?} is not a number"),
                    ))
                }
            }
        }
        records.push(HumanRatingRecord {
            sample_id: sample_id.to_string(),
            system_name: system.to_string(),
            answerability: core[0],
            correctness: core[1],
            external_knowledge: core[2],
            relevance: core[3],
            soundness: core[4],
            extra,
        });
    }
    Ok(records)
}

/// Per-system means, systems in order of first appearance.
pub fn system_means(records: &[HumanRatingRecord]) -> Vec<RatingMeans> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<String, (usize, [f64; 5])> = BTreeMap::new();
    for r in records {
        let entry = sums.entry(r.system_name.clone()).or_insert_with(|| {
            order.push(r.system_name.clone());
            (0, [0.0; 5])
        });
        entry.0 += 1;
        for (acc, v) in entry.1.iter_mut().zip(r.core()) {
            *acc += v as f64;
        }
    }
    order
        .into_iter()
        .map(|system| {
            let (count, total) = sums[&system];
            RatingMeans {
                system_name: system,
                count,
                means: total.map(|s| s / count as f64),
            }
        })
        .collect()
}

/// Rows are dimensions, columns are systems.
pub fn ratings_table_csv(means: &[RatingMeans]) -> String {
    let mut out = String::from("dimension");
    for m in means {
        out.push(',');
        out.push_str(&csv_field(&m.system_name));
    }
    out.push('\n');
    for (d, name) in RATING_DIMENSIONS.iter().enumerate() {
        out.push_str(name);
        for m in means {
            out.push_str(&format!(",{:.2}", m.means[d]));
        }
        out.push('\n');
    }
    out.push_str("ratings");
    for m in means {
        out.push_str(&format!(",{}", m.count));
    }
    out.push('\n');
    out
}
