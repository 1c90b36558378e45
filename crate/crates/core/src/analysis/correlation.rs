use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::metrics::{spearman, ItemScores, MetricsError};

use super::ratings::{HumanRatingRecord, RATING_DIMENSIONS};
use super::tokens::csv_field;
use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrelationCell {
    Defined {
        rho: f64,
        p: f64,
    },
    /// One of the columns is constant.
    Undefined,
}

impl CorrelationCell {
    pub fn rho(&self) -> Option<f64> {
        match self {
            Self::Defined { rho, .. } => Some(*rho),
            Self::Undefined => None,
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self {
            Self::Defined { p, .. } => Some(*p),
            Self::Undefined => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Self::Defined { rho, p } => format!("{rho:.3}{}", stars(*p)),
            Self::Undefined => "NA".to_string(),
        }
    }
}

/// `**` for p < .005, `*` for p < .05, otherwise empty.
pub fn stars(p: f64) -> &'static str {
    if p < 0.005 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Symmetric matrix of pairwise Spearman correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<CorrelationCell>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<CorrelationCell> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.cells[i][j])
    }

    /// Matrix of rho values with significance stars; `NA` where undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column");
        for n in &self.names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.cells) {
            out.push_str(&csv_field(name));
            for cell in row {
                out.push(',');
                out.push_str(&cell.render());
            }
            out.push('\n');
        }
        out
    }

    /// One line per unordered pair with full-precision rho and p.
    pub fn to_pairs_csv(&self) -> String {
        let mut out = String::from("a,b,rho,p,significance\n");
        for i in 0..self.names.len() {
            for j in i + 1..self.names.len() {
                let (a, b) = (csv_field(&self.names[i]), csv_field(&self.names[j]));
                match self.cells[i][j] {
                    CorrelationCell::Defined { rho, p } => {
                        out.push_str(&format!("{a},{b},{rho},{p},{}\n", stars(p)));
                    }
                    CorrelationCell::Undefined => out.push_str(&format!("{a},{b},,,undefined\n")),
                }
            }
        }
        out
    }

    pub fn render_text(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(0).max(9);
        let mut out = format!("{:width$}", "");
        for n in &self.names {
            out.push_str(&format!(" {n:>width$}"));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.cells) {
            out.push_str(&format!("{name:width$}"));
            for cell in row {
                out.push_str(&format!(" {:>width$}", cell.render()));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Spearman correlation over the union of metric and rating
/// columns, metric columns first. Cells involving a constant column are
/// [`CorrelationCell::Undefined`].
pub fn correlation_matrix(
    metric_columns: &[Column],
    rating_columns: &[Column],
) -> Result<CorrelationMatrix, AnalysisError> {
    let columns: Vec<&Column> = metric_columns.iter().chain(rating_columns).collect();
    let first = columns.first().ok_or(AnalysisError::Empty("columns"))?;
    let n = first.values.len();
    let mut seen = HashSet::new();
    for c in &columns {
        if c.values.len() != n {
            return Err(AnalysisError::ColumnLength {
                name: c.name.clone(),
                len: c.values.len(),
                expected: n,
            });
        }
        if !seen.insert(c.name.as_str()) {
            return Err(AnalysisError::DuplicateColumn(c.name.clone()));
        }
    }
    if n < 3 {
        return Err(AnalysisError::TooFewRows { needed: 3, got: n });
    }
    let k = columns.len();
    let mut cells = vec![vec![CorrelationCell::Undefined; k]; k];
    for i in 0..k {
        for j in i..k {
            let cell = match spearman(&columns[i].values, &columns[j].values) {
                Ok((rho, p)) => CorrelationCell::Defined { rho, p },
                Err(MetricsError::ConstantInput) => CorrelationCell::Undefined,
                Err(e) => return Err(e.into()),
            };
            cells[i][j] = cell;
            cells[j][i] = cell;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.name.clone()).collect(),
        cells,
    })
}

/// Per-sample metric values of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemItems {
    pub system_name: String,
    pub items: Vec<ItemScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One row per rating record.
    #[default]
    PerItem,
    /// One row per system, averaging metrics and ratings.
    PerSystemMean,
}

/// Join per-sample metric scores with human ratings on `(system, sample_id)`
/// and lay them out as columns. Returns `(metric columns, rating columns,
/// number of ratings without matching scores)`.
pub fn correlation_inputs(
    systems: &[SystemItems],
    ratings: &[HumanRatingRecord],
    granularity: Granularity,
) -> (Vec<Column>, Vec<Column>, usize) {
    let mut index: HashMap<(&str, &str), &ItemScores> = HashMap::new();
    for s in systems {
        for item in &s.items {
            index.insert((s.system_name.as_str(), item.id.as_str()), item);
        }
    }
    let max_n = systems
        .iter()
        .flat_map(|s| s.items.iter().map(|i| i.bleu.len()))
        .min()
        .unwrap_or(0);
    let mut metric_names: Vec<String> = (1..=max_n).map(|n| format!("BLEU{n}")).collect();
    metric_names.push("QA_source".into());
    metric_names.push("QA_context".into());

    let mut rows: Vec<(&str, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut unmatched = 0;
    for r in ratings {
        let Some(item) = index.get(&(r.system_name.as_str(), r.sample_id.as_str())) else {
            unmatched += 1;
            continue;
        };
        let mut metrics: Vec<f64> = item.bleu[..max_n].to_vec();
        metrics.push(item.qa_source);
        metrics.push(item.qa_context);
        let human = r.core().iter().map(|&v| v as f64).collect();
        rows.push((r.system_name.as_str(), metrics, human));
    }

    if granularity == Granularity::PerSystemMean {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: BTreeMap<&str, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (system, m, h) in rows {
            let g = groups.entry(system).or_insert_with(|| {
                order.push(system);
                (0, vec![0.0; m.len()], vec![0.0; h.len()])
            });
            g.0 += 1;
            g.1.iter_mut().zip(&m).for_each(|(a, v)| *a += v);
            g.2.iter_mut().zip(&h).for_each(|(a, v)| *a += v);
        }
        rows = order
            .into_iter()
            .map(|s| {
                let (c, m, h) = &groups[s];
                let c = *c as f64;
                (
                    s,
                    m.iter().map(|v| v / c).collect(),
                    h.iter().map(|v| v / c).collect(),
                )
            })
            .collect();
    }

    let metric_columns = metric_names
        .into_iter()
        .enumerate()
        .map(|(k, name)| Column::new(name, rows.iter().map(|r| r.1[k]).collect()))
        .collect();
    let rating_columns = RATING_DIMENSIONS
        .iter()
        .enumerate()
        .map(|(k, name)| Column::new(*name, rows.iter().map(|r| r.2[k]).collect()))
        .collect();
    (metric_columns, rating_columns, unmatched)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn assert_rho(cell: Option<CorrelationCell>, expected: f64) {
        let rho = cell.and_then(|c| c.rho()).expect("defined");
        assert!((rho - expected).abs() < 1e-12, "{rho} vs {expected}");
    }

    #[test]
    fn diagonal_symmetry_and_delegation() {
        let x = Column::new("x", vec![1.0, 2.0, 3.0]);
        let y = Column::new("y", vec![3.0, 1.0, 2.0]);
        let m = correlation_matrix(std::slice::from_ref(&x), std::slice::from_ref(&y)).unwrap();
        assert_eq!(m.names, ["x", "y"]);
        assert_rho(m.get("x", "x"), 1.0);
        assert_eq!(m.get("x", "y"), m.get("y", "x"));
        let (rho, p) = spearman(&x.values, &y.values).unwrap();
        assert_eq!(
            m.get("x", "y").unwrap(),
            CorrelationCell::Defined { rho, p }
        );
        assert!((rho + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_undefined() {
        let a = Column::new("a", vec![1.0, 2.0, 3.0, 4.0]);
        let c = Column::new("c", vec![2.0; 4]);
        let m = correlation_matrix(&[a], &[c]).unwrap();
        assert_eq!(m.get("a", "c"), Some(CorrelationCell::Undefined));
        assert_eq!(m.get("c", "c"), Some(CorrelationCell::Undefined));
        assert_rho(m.get("a", "a"), 1.0);
        assert!(m.to_csv().contains("NA"));
        assert!(m.to_pairs_csv().contains("a,c,,,undefined"));
    }

    #[test]
    fn shape_errors() {
        let a = Column::new("a", vec![1.0, 2.0, 3.0]);
        let short = Column::new("b", vec![1.0, 2.0]);
        assert!(matches!(
            correlation_matrix(std::slice::from_ref(&a), &[short]),
            Err(AnalysisError::ColumnLength { .. })
        ));
        assert!(matches!(
            correlation_matrix(std::slice::from_ref(&a), std::slice::from_ref(&a)),
            Err(AnalysisError::DuplicateColumn(_))
        ));
        let two = Column::new("t", vec![1.0, 2.0]);
        assert!(matches!(
            correlation_matrix(&[two], &[]),
            Err(AnalysisError::TooFewRows { .. })
        ));
        assert!(correlation_matrix(&[], &[]).is_err());
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.005), "*");
        assert_eq!(stars(0.04), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn independent_columns_rarely_correlate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut calm = 0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..50).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..50).map(|_| rng.random()).collect();
            let m = correlation_matrix(&[Column::new("a", a)], &[Column::new("b", b)]).unwrap();
            let cell = m.get("a", "b").unwrap();
            if cell.rho().unwrap().abs() < 0.5 && cell.p().unwrap() > 0.005 {
                calm += 1;
            }
        }
        assert!(calm >= 95, "{calm}");
    }

    fn item(id: &str, b: f64, src: f64, ctx: f64) -> ItemScores {
        ItemScores {
            id: id.into(),
            bleu: vec![b, b / 2.0],
            qa_source: src,
            qa_context: ctx,
        }
    }

    fn rating(id: &str, system: &str, v: u8) -> HumanRatingRecord {
        HumanRatingRecord {
            sample_id: id.into(),
            system_name: system.into(),
            answerability: v,
            correctness: v,
            external_knowledge: 6 - v,
            relevance: 3,
            soundness: v,
            extra: Default::default(),
        }
    }

    #[test]
    fn join_per_item_and_per_system() {
        let systems = vec![
            SystemItems {
                system_name: "a".into(),
                items: vec![item("1", 0.1, 0.2, 0.3), item("2", 0.4, 0.5, 0.6)],
            },
            SystemItems {
                system_name: "b".into(),
                items: vec![item("1", 0.7, 0.8, 0.9)],
            },
        ];
        let ratings = vec![
            rating("1", "a", 1),
            rating("2", "a", 3),
            rating("1", "b", 5),
            rating("9", "b", 2),
        ];
        let (m, h, unmatched) = correlation_inputs(&systems, &ratings, Granularity::PerItem);
        assert_eq!(unmatched, 1);
        assert_eq!(
            m.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            ["BLEU1", "BLEU2", "QA_source", "QA_context"]
        );
        assert_eq!(m[0].values, [0.1, 0.4, 0.7]);
        assert_eq!(h[0].values, [1.0, 3.0, 5.0]);
        let mat = correlation_matrix(&m, &h).unwrap();
        assert_rho(mat.get("BLEU1", "answerability"), 1.0);
        assert_eq!(
            mat.get("relevance", "BLEU1"),
            Some(CorrelationCell::Undefined)
        );
        assert_rho(mat.get("external_knowledge", "QA_context"), -1.0);

        let (m, h, _) = correlation_inputs(&systems, &ratings, Granularity::PerSystemMean);
        assert!((m[0].values[0] - 0.25).abs() < 1e-12);
        assert_eq!(m[0].values.len(), 2);
        assert_eq!(h[0].values, [2.0, 5.0]);
    }
}
