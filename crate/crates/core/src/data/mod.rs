//! Dataset ingestion, admission filtering, preprocessing, and resampling.

mod bootstrap;
mod cfs;
mod ingest;
mod redundancy;

use std::collections::HashSet;
use std::path::PathBuf;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_splits, bootstrap_splits_for, BootstrapSplit, MAX_REDRAWS};
pub use cfs::{cfs_select, merit, CfsSelection};
pub use ingest::load_csv;
pub use redundancy::{spearman_redundancy_filter, variance_inflation, RedundancyReport};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("empty cell at row {row}, column `{column}`")]
    EmptyCell { row: usize, column: String },
    #[error("cannot parse `{value}` as a number at row {row}, column `{column}`")]
    Unparseable { row: usize, column: String, value: String },
    #[error("label column `{column}` is not binary: found values {values:?}")]
    NonBinaryLabel { column: String, values: Vec<String> },
    #[error("positive label `{positive}` does not occur in column `{column}`")]
    PositiveLabelAbsent { column: String, positive: String },
    #[error("non-finite value at row {row}, feature `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("labels must be 0 or 1, found {0}")]
    InvalidLabel(u8),
    #[error("need at least {required} features, found {found}")]
    TooFewFeatures { found: usize, required: usize },
    #[error("need at least {required} rows, found {found}")]
    TooFewRows { found: usize, required: usize },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bootstrap iteration {iteration}: no usable resample after {retries} redraws")]
    BootstrapExhausted { iteration: usize, retries: usize },
}

/// Minimum shape for agreement analysis.
pub const MIN_FEATURES: usize = 2;
pub const MIN_ROWS: usize = 10;

/// A feature matrix with binary labels (1 = defective).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    features: Array2<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Structural validation only: shapes agree, names are unique, values are
    /// finite, labels are binary. Use [`Dataset::check_analyzable`] for the
    /// minimum-size requirements of the agreement pipeline.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let (rows, cols) = features.dim();
        if rows != labels.len() {
            return Err(DataError::Shape(format!("{rows} feature rows but {} labels", labels.len())));
        }
        if cols != feature_names.len() {
            return Err(DataError::Shape(format!(
                "{cols} feature columns but {} names",
                feature_names.len()
            )));
        }
        if cols == 0 {
            return Err(DataError::TooFewFeatures { found: 0, required: 1 });
        }
        let mut seen = HashSet::new();
        for n in &feature_names {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateFeature(n.clone()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(DataError::InvalidLabel(bad));
        }
        for ((r, c), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite { row: r + 1, column: feature_names[c].clone() });
            }
        }
        Ok(Self { name: name.into(), features, labels, feature_names })
    }

    /// At least two features and ten rows, with both classes present.
    pub fn check_analyzable(&self) -> Result<(), DataError> {
        if self.n_features() < MIN_FEATURES {
            return Err(DataError::TooFewFeatures { found: self.n_features(), required: MIN_FEATURES });
        }
        if self.n_rows() < MIN_ROWS {
            return Err(DataError::TooFewRows { found: self.n_rows(), required: MIN_ROWS });
        }
        let pos = self.n_positive();
        if pos == 0 || pos == self.n_rows() {
            return Err(DataError::SingleClass);
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.column(j).to_vec()
    }

    /// Labels as 0.0 / 1.0.
    pub fn label_values(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    /// Rows in the given order; indices may repeat (bootstrap resamples).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Columns in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select(Axis(1), cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
        }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta::from_counts(self.n_rows(), self.n_features(), self.n_positive())
    }
}

/// Events-per-variable and defective ratio of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub epv: f64,
    /// Percentage of defective rows, in [0, 100].
    pub defective_ratio: f64,
    pub n_rows: usize,
    pub n_features: usize,
}

impl DatasetMeta {
    pub fn from_counts(n_rows: usize, n_features: usize, n_defective: usize) -> Self {
        Self {
            epv: n_defective as f64 / n_features as f64,
            defective_ratio: 100.0 * n_defective as f64 / n_rows as f64,
            n_rows,
            n_features,
        }
    }
}

pub const MIN_EPV: f64 = 10.0;
pub const MAX_DEFECTIVE_RATIO: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowEpv,
    DefectiveRatio,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::LowEpv => write!(f, "EPV below {MIN_EPV}"),
            RejectReason::DefectiveRatio => write!(f, "defective ratio at or above {MAX_DEFECTIVE_RATIO}%"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reasons", rename_all = "snake_case")]
pub enum Admission {
    Admitted,
    Rejected(Vec<RejectReason>),
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted)
    }
}

/// Advisory EPV / defective-ratio filter. Every firing filter is listed.
pub fn admission_check(d: &Dataset) -> Admission {
    admission_check_meta(&d.meta())
}

pub fn admission_check_meta(meta: &DatasetMeta) -> Admission {
    let mut reasons = Vec::new();
    if meta.epv < MIN_EPV {
        reasons.push(RejectReason::LowEpv);
    }
    if meta.defective_ratio >= MAX_DEFECTIVE_RATIO {
        reasons.push(RejectReason::DefectiveRatio);
    }
    if reasons.is_empty() {
        Admission::Admitted
    } else {
        Admission::Rejected(reasons)
    }
}
