use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::TrainingError;

pub const METRICS_HEADER: &str =
    "kind,phase,epoch,step,loss,loss_ml,loss_rl,reward_greedy,reward_sample,grad_norm,val_loss,val_bleu4";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Step,
    Skipped,
    Epoch,
    Phase,
}

impl RowKind {
    fn as_str(self) -> &'static str {
        match self {
            RowKind::Step => "step",
            RowKind::Skipped => "skipped",
            RowKind::Epoch => "epoch",
            RowKind::Phase => "phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub kind: RowKind,
    pub phase: String,
    pub epoch: usize,
    pub step: usize,
    pub loss: Option<f64>,
    pub loss_ml: Option<f64>,
    pub loss_rl: Option<f64>,
    pub reward_greedy: Option<f64>,
    pub reward_sample: Option<f64>,
    pub grad_norm: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_bleu4: Option<f64>,
}

impl LogRow {
    pub fn new(kind: RowKind, phase: &str, epoch: usize, step: usize) -> Self {
        Self {
            kind,
            phase: phase.to_string(),
            epoch,
            step,
            loss: None,
            loss_ml: None,
            loss_rl: None,
            reward_greedy: None,
            reward_sample: None,
            grad_norm: None,
            val_loss: None,
            val_bleu4: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.kind.as_str(),
            self.phase,
            self.epoch,
            self.step,
            f(self.loss),
            f(self.loss_ml),
            f(self.loss_rl),
            f(self.reward_greedy),
            f(self.reward_sample),
            f(self.grad_norm),
            f(self.val_loss),
            f(self.val_bleu4),
        )
    }
}

/// Append-only CSV log; rows are also kept in memory.
#[derive(Debug)]
pub struct MetricsLog {
    file: Option<(PathBuf, File)>,
    rows: Vec<LogRow>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        Self {
            file: None,
            rows: Vec::new(),
        }
    }

    /// Open `path` for appending, writing the header if the file is new.
    pub fn open(path: &Path) -> Result<Self, TrainingError> {
        let io_err = |source| TrainingError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let fresh = !path.exists() || fs::metadata(path).map_err(io_err)?.len() == 0;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}").map_err(io_err)?;
        }
        Ok(Self {
            file: Some((path.to_path_buf(), file)),
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, row: LogRow) -> Result<(), TrainingError> {
        if let Some((path, file)) = &mut self.file {
            writeln!(file, "{}", row.to_csv()).map_err(|source| TrainingError::Io {
                path: path.clone(),
                source,
            })?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }
}
