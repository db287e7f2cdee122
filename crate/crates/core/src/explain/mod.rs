//! Model-agnostic importance: permutation importance and Shapley values,
//! both computed only through [`Model::predict_proba`](crate::learners::Model).

mod permutation;
mod shap;

use thiserror::Error;

use crate::learners::PredictError;
use crate::perf::PerfError;

pub use permutation::{permutation_importance, permutation_importance_with};
pub use shap::{sample_background, shap_importance, shap_values, shapley_weights, ShapExplanation, ShapMode, MAX_EXACT_FEATURES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("exact Shapley values need at most {max} features, got {found}")]
    TooManyFeatures { max: usize, found: usize },
    #[error("sampled Shapley values need at least {required} coalitions, got {found}")]
    TooFewCoalitions { required: usize, found: usize },
    #[error("explanation covers {found} features but {expected} names were given")]
    NameCount { expected: usize, found: usize },
}
