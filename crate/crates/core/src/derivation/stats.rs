//! Per-split sample counts, laid out as rows (dataset variant) by columns
//! (train / dev / test).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Split;

use super::Derivation;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationStats {
    pub questions: usize,
    pub triplets: usize,
    pub skipped_first_sentence: usize,
    pub skipped_empty_context: usize,
    pub filtered_by_entities: usize,
}

impl From<&Derivation> for DerivationStats {
    fn from(d: &Derivation) -> Self {
        Self {
            questions: d.questions,
            triplets: d.triplets.len(),
            skipped_first_sentence: d.skipped_first_sentence,
            skipped_empty_context: d.skipped_empty_context,
            filtered_by_entities: d.filtered_by_entities,
        }
    }
}

/// Row label -> split -> count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTable {
    pub rows: BTreeMap<String, BTreeMap<Split, usize>>,
    /// Row order for rendering; labels missing here render after, sorted.
    pub order: Vec<String>,
}

impl SplitTable {
    pub fn set(&mut self, row: &str, split: Split, count: usize) {
        if !self.order.iter().any(|r| r == row) {
            self.order.push(row.to_string());
        }
        self.rows
            .entry(row.to_string())
            .or_default()
            .insert(split, count);
    }

    pub fn get(&self, row: &str, split: Split) -> Option<usize> {
        self.rows.get(row)?.get(&split).copied()
    }

    fn ordered_rows(&self) -> Vec<&String> {
        let mut rows: Vec<&String> = self
            .order
            .iter()
            .filter(|r| self.rows.contains_key(*r))
            .collect();
        let mut rest: Vec<&String> = self
            .rows
            .keys()
            .filter(|k| !self.order.contains(k))
            .collect();
        rest.sort();
        rows.extend(rest);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,train,dev,test\n");
        for row in self.ordered_rows() {
            let cells: Vec<String> = Split::ALL
                .iter()
                .map(|s| self.get(row, *s).map(|c| c.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&format!("{row},{}\n", cells.join(",")));
        }
        out
    }

    pub fn render(&self) -> String {
        let rows = self.ordered_rows();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0).max(7);
        let mut out = format!(
            "{:<width$} | {:>9} | {:>9} | {:>9}\n",
            "", "Train", "Dev", "Test"
        );
        out.push_str(&format!("{}\n", "-".repeat(width + 36)));
        for row in rows {
            let cell = |s: Split| {
                self.get(row, s)
                    .map(group_thousands)
                    .unwrap_or_else(|| "-".into())
            };
            out.push_str(&format!(
                "{:<width$} | {:>9} | {:>9} | {:>9}\n",
                row,
                cell(Split::Train),
                cell(Split::Validation),
                cell(Split::Test)
            ));
        }
        out
    }
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
