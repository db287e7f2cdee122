use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("model expects {expected} features, got {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("coalition table needs at most {max} features, model has {found}")]
    TooManyFeatures { max: usize, found: usize },
}

/// Largest feature count for which full coalition tables are built.
pub const MAX_TABLE_FEATURES: usize = 20;

/// Anything that maps feature rows to probabilities of the positive class.
///
/// Model-agnostic explainers only rely on this trait; the learners in this
/// crate implement it, and tests implement it for hand-written stubs.
pub trait Model: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError>;

    /// Interventional coalition values for one row: entry `S` (bit j set =
    /// feature j taken from `row`) is the mean prediction over `background`
    /// rows with every feature outside `S` copied from the background row.
    ///
    /// The default evaluates all `2^p * |background|` hybrid rows through
    /// [`Model::predict_proba`]. Implementations may override it with a
    /// faster exact evaluation; results must agree to rounding.
    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        enumerate_coalitions(self, row, background)
    }

    /// Exact interventional Shapley values of one row, when the model can
    /// compute them without a coalition table. `None` means "use the table".
    fn exact_shapley(&self, _row: &[f64], _background: ArrayView2<'_, f64>) -> Option<Result<Vec<f64>, PredictError>> {
        None
    }

    /// Predictions for `row` with feature `j` set to each of `values`
    /// (ascending), when the model has a faster path than building the rows.
    /// `None` means "use [`Model::predict_proba`]".
    fn sweep_feature(&self, _row: &[f64], _j: usize, _values: &[f64]) -> Option<Result<Vec<f64>, PredictError>> {
        None
    }
}

pub(crate) fn check_width(expected: usize, found: usize) -> Result<(), PredictError> {
    if expected == found {
        Ok(())
    } else {
        Err(PredictError::FeatureCount { expected, found })
    }
}

/// Reference coalition-table evaluation through `predict_proba` only.
pub fn enumerate_coalitions<M: Model + ?Sized>(
    model: &M,
    row: &[f64],
    background: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, PredictError> {
    let p = model.n_features();
    check_width(p, row.len())?;
    check_width(p, background.ncols())?;
    if p > MAX_TABLE_FEATURES {
        return Err(PredictError::TooManyFeatures { max: MAX_TABLE_FEATURES, found: p });
    }
    let m = background.nrows();
    if m == 0 {
        return Err(PredictError::EmptyBackground);
    }
    let n_masks = 1usize << p;
    let mut hybrid = Array2::zeros((n_masks * m, p));
    for mask in 0..n_masks {
        for (k, b) in background.outer_iter().enumerate() {
            let mut out = hybrid.row_mut(mask * m + k);
            for j in 0..p {
                out[j] = if mask >> j & 1 == 1 { row[j] } else { b[j] };
            }
        }
    }
    let preds = model.predict_proba(hybrid.view())?;
    Ok(preds.chunks(m).map(|c| c.iter().sum::<f64>() / m as f64).collect())
}
