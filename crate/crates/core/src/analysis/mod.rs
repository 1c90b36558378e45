//! Diagnostics over generated questions: first-token histograms, prefix
//! rates, beam-size divergence, and correlation of automatic metrics with
//! human ratings.

mod beam;
mod bundle;
mod correlation;
mod ratings;
mod tokens;

use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::model::ModelError;

pub use beam::{beam_divergence_report, BeamColumn, BeamDivergence, BeamInput};
pub use bundle::{write_bundle, ReportBundle};
pub use correlation::{
    correlation_inputs, correlation_matrix, stars, Column, CorrelationCell, CorrelationMatrix,
    Granularity, SystemItems,
};
pub use ratings::{
    load_ratings, parse_ratings, ratings_table_csv, system_means, HumanRatingRecord, RatingMeans,
    RATING_DIMENSIONS,
};
pub use tokens::{
    first_token_histogram, prefix_rate, TokenCount, TokenHistogram, EMPTY_TOKEN, OTHER_TOKEN,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no {0} given")]
    Empty(&'static str),
    #[error("prefix has no tokens")]
    EmptyPrefix,
    #[error("column {name} has {len} values, expected {expected}")]
    ColumnLength {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("duplicate column name {0}")]
    DuplicateColumn(String),
    #[error("ratings line {line}: {message}")]
    Rating { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AnalysisError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
