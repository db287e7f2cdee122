//! Built-in probabilistic classifiers and their classifier-specific (CS)
//! importance scores.

pub mod cart;
pub mod forest;
pub mod gbt;
pub mod logistic;
mod model;
pub mod tree;
mod tune;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::stats;

pub use model::{enumerate_coalitions, Model, PredictError, MAX_TABLE_FEATURES};
pub use tune::{cv_auc, draw_candidate, stratified_folds, tune_over, tune_random_search, TuneOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("training data needs at least 2 rows of each class (found {positives} positive, {negatives} negative)")]
    InsufficientClasses { positives: usize, negatives: usize },
    #[error("non-finite feature value at training row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("training data has {found} features, classifier expects {expected}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("forest importance requires the training set the forest was fit on ({expected} rows, got {found})")]
    MissingOobBookkeeping { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Cart,
    RandomForest,
    Gbt,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [LearnerKind::Logistic, LearnerKind::Cart, LearnerKind::RandomForest, LearnerKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Logistic => "logistic",
            LearnerKind::Cart => "cart",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::Gbt => "gbt",
        }
    }

    /// The CS importance method attached to this learner.
    pub fn cs_method(self) -> ImportanceMethod {
        match self {
            LearnerKind::Logistic => ImportanceMethod::Lrfi,
            LearnerKind::Cart => ImportanceMethod::Rfi,
            LearnerKind::RandomForest => ImportanceMethod::Rffi,
            LearnerKind::Gbt => ImportanceMethod::Xgfi,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" | "glmnet" => Ok(LearnerKind::Logistic),
            "cart" | "rpart" => Ok(LearnerKind::Cart),
            "random_forest" | "rf" => Ok(LearnerKind::RandomForest),
            "gbt" | "xgb" => Ok(LearnerKind::Gbt),
            other => Err(format!("unknown classifier `{other}` (expected logistic, cart, random_forest, gbt)")),
        }
    }
}

/// Hyperparameters, one variant per learner kind.
///
/// Valid ranges: logistic `lambda >= 0`, `alpha` in [0, 1]; cart `cp` in
/// [0, 1]; forest `n_trees >= 1`, `mtry` in 1..=p; gbt `nrounds >= 1`,
/// `max_depth` in 1..=16, `eta` in (0, 1]. The random-search grids are narrower
/// (see [`draw_candidate`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Logistic { lambda: f64, alpha: f64 },
    Cart { cp: f64 },
    RandomForest { mtry: usize, n_trees: usize },
    Gbt { nrounds: usize, max_depth: usize, eta: f64 },
}

impl Hyperparameters {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparameters::Logistic { .. } => LearnerKind::Logistic,
            Hyperparameters::Cart { .. } => LearnerKind::Cart,
            Hyperparameters::RandomForest { .. } => LearnerKind::RandomForest,
            Hyperparameters::Gbt { .. } => LearnerKind::Gbt,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::InvalidHyperparameter(m));
        match *self {
            Hyperparameters::Logistic { lambda, alpha } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("lambda {lambda}"));
                }
                if !(0.0..=1.0).contains(&alpha) {
                    return bad(format!("alpha {alpha}"));
                }
            }
            Hyperparameters::Cart { cp } => {
                if !(0.0..=1.0).contains(&cp) {
                    return bad(format!("cp {cp}"));
                }
            }
            Hyperparameters::RandomForest { mtry, n_trees } => {
                if n_trees == 0 {
                    return bad("n_trees 0".into());
                }
                if mtry == 0 || mtry > n_features {
                    return bad(format!("mtry {mtry} with {n_features} features"));
                }
            }
            Hyperparameters::Gbt { nrounds, max_depth, eta } => {
                if nrounds == 0 {
                    return bad("nrounds 0".into());
                }
                if !(1..=16).contains(&max_depth) {
                    return bad(format!("max_depth {max_depth}"));
                }
                if !(eta > 0.0 && eta <= 1.0) {
                    return bad(format!("eta {eta}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub params: Hyperparameters,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(params: Hyperparameters, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn kind(&self) -> LearnerKind {
        self.params.kind()
    }

    /// Untuned defaults for `p` features.
    pub fn default_for(kind: LearnerKind, p: usize, seed: u64) -> Self {
        let params = match kind {
            LearnerKind::Logistic => Hyperparameters::Logistic { lambda: 1e-3, alpha: 0.0 },
            LearnerKind::Cart => Hyperparameters::Cart { cp: 0.01 },
            LearnerKind::RandomForest => {
                Hyperparameters::RandomForest { mtry: ((p as f64).sqrt().floor() as usize).max(1), n_trees: 100 }
            }
            LearnerKind::Gbt => Hyperparameters::Gbt { nrounds: 100, max_depth: 3, eta: 0.1 },
        };
        Self { params, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Logistic(logistic::LogisticModel),
    Cart(cart::CartModel),
    RandomForest(forest::ForestModel),
    Gbt(gbt::GbtModel),
}

/// A trained classifier with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedClassifier {
    pub spec: LearnerSpec,
    pub feature_names: Vec<String>,
    pub model: FittedModel,
}

impl FittedClassifier {
    pub fn kind(&self) -> LearnerKind {
        self.spec.kind()
    }

    fn inner(&self) -> &dyn Model {
        match &self.model {
            FittedModel::Logistic(m) => m,
            FittedModel::Cart(m) => m,
            FittedModel::RandomForest(m) => m,
            FittedModel::Gbt(m) => m,
        }
    }
}

impl Model for FittedClassifier {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        self.inner().predict_proba(rows)
    }

    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        self.inner().coalition_table(row, background)
    }

    fn exact_shapley(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Option<Result<Vec<f64>, PredictError>> {
        self.inner().exact_shapley(row, background)
    }

    fn sweep_feature(&self, row: &[f64], j: usize, values: &[f64]) -> Option<Result<Vec<f64>, PredictError>> {
        self.inner().sweep_feature(row, j, values)
    }
}

/// Mean (or sum, with `scale = 1`) over `trees` of the swept predictions.
pub(crate) fn sweep_trees(trees: &[tree::Tree], p: usize, row: &[f64], j: usize, values: &[f64], scale: f64) -> Result<Vec<f64>, PredictError> {
    model::check_width(p, row.len())?;
    if j >= p {
        return Err(PredictError::FeatureCount { expected: p, found: j + 1 });
    }
    let mut diff = vec![0.0; values.len() + 1];
    for t in trees {
        t.accumulate_sweep(row, j, values, scale, &mut diff);
    }
    Ok(tree::finish_sweep(diff))
}

pub(crate) fn check_table(p: usize, background_rows: usize) -> Result<(), PredictError> {
    if p > MAX_TABLE_FEATURES {
        return Err(PredictError::TooManyFeatures { max: MAX_TABLE_FEATURES, found: p });
    }
    if background_rows == 0 {
        return Err(PredictError::EmptyBackground);
    }
    Ok(())
}

/// Mean over background rows and trees of the per-leaf closed-form Shapley
/// values; valid for models whose output is the average of tree outputs.
pub(crate) fn shapley_over_trees(
    trees: &[tree::Tree],
    p: usize,
    row: &[f64],
    background: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, PredictError> {
    model::check_width(p, row.len())?;
    model::check_width(p, background.ncols())?;
    if background.nrows() == 0 {
        return Err(PredictError::EmptyBackground);
    }
    let scale = 1.0 / (background.nrows() * trees.len()) as f64;
    let mut phi = vec![0.0; p];
    for b in background.outer_iter() {
        let b = b.to_vec();
        for t in trees {
            t.accumulate_shapley(row, &b, scale, &mut phi);
        }
    }
    Ok(phi)
}

/// Train a classifier. Deterministic in `(spec, train)`.
pub fn fit(spec: &LearnerSpec, train: &Dataset) -> Result<FittedClassifier, FitError> {
    let x = train.features();
    let positives = train.n_positive();
    let negatives = train.n_rows() - positives;
    if positives < 2 || negatives < 2 {
        return Err(FitError::InsufficientClasses { positives, negatives });
    }
    if let Some(((row, column), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(FitError::NonFinite { row, column });
    }
    spec.params.validate(train.n_features())?;
    let y = train.label_values();
    let model = match spec.params {
        Hyperparameters::Logistic { lambda, alpha } => FittedModel::Logistic(logistic::fit_logistic(x, &y, lambda, alpha)),
        Hyperparameters::Cart { cp } => FittedModel::Cart(cart::fit_cart(x, &y, &cart::CartParams::with_cp(cp))),
        Hyperparameters::RandomForest { mtry, n_trees } => {
            FittedModel::RandomForest(forest::fit_forest(x, &y, &forest::ForestParams { n_trees, mtry }, spec.seed))
        }
        Hyperparameters::Gbt { nrounds, max_depth, eta } => {
            FittedModel::Gbt(gbt::fit_gbt(x, &y, &gbt::GbtParams { nrounds, max_depth, eta }))
        }
    };
    Ok(FittedClassifier { spec: *spec, feature_names: train.feature_names().to_vec(), model })
}

/// Convenience wrapper around [`Model::predict_proba`].
pub fn predict_proba(c: &FittedClassifier, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
    c.predict_proba(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    /// Logistic regression Wald statistic.
    Lrfi,
    /// CART summed Gini decrease.
    Rfi,
    /// Random forest OOB permutation error increase.
    Rffi,
    /// Boosted-tree split count.
    Xgfi,
    Permutation,
    Shap,
}

impl ImportanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMethod::Lrfi => "lrfi",
            ImportanceMethod::Rfi => "rfi",
            ImportanceMethod::Rffi => "rffi",
            ImportanceMethod::Xgfi => "xgfi",
            ImportanceMethod::Permutation => "permutation",
            ImportanceMethod::Shap => "shap",
        }
    }

    pub fn is_classifier_specific(self) -> bool {
        !matches!(self, ImportanceMethod::Permutation | ImportanceMethod::Shap)
    }
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-feature importance from one method on one fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub method: ImportanceMethod,
    pub features: Vec<String>,
    /// Scores rescaled so the largest is 100.
    pub values: Vec<f64>,
    /// Scores before rescaling.
    pub raw: Vec<f64>,
    pub iteration: usize,
}

impl ImportanceScores {
    pub fn from_raw(method: ImportanceMethod, features: Vec<String>, raw: Vec<f64>) -> Self {
        let mut values = raw.clone();
        stats::scale_to_100(&mut values);
        Self { method, features, values, raw, iteration: 0 }
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.values[i])
    }
}

/// Classifier-specific importance, dispatched on the learner kind:
/// logistic Wald statistic, CART Gini decrease, forest OOB permutation,
/// boosted split count. `train` must be the data `c` was fit on.
pub fn cs_importance(c: &FittedClassifier, train: &Dataset) -> Result<ImportanceScores, FitError> {
    if train.n_features() != c.n_features() {
        return Err(FitError::FeatureMismatch { expected: c.n_features(), found: train.n_features() });
    }
    let raw = match (&c.model, c.spec.params) {
        (FittedModel::Logistic(m), Hyperparameters::Logistic { lambda, alpha }) => m.wald(train.features(), lambda, alpha),
        (FittedModel::Cart(m), _) => m.impurity_importance(),
        (FittedModel::RandomForest(m), _) => {
            if m.n_train != train.n_rows() || m.oob.len() != m.trees.len() {
                return Err(FitError::MissingOobBookkeeping { expected: m.n_train, found: train.n_rows() });
            }
            m.oob_permutation_importance(train.features(), &train.label_values())
        }
        (FittedModel::Gbt(m), _) => m.split_counts(),
        _ => unreachable!("model variant always matches its spec"),
    };
    Ok(ImportanceScores::from_raw(c.kind().cs_method(), c.feature_names.clone(), raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = crate::seed::rng(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
        let y = x.outer_iter().map(|r| u8::from(r[0] + 0.2 * rng.random::<f64>() > 0.6)).collect();
        Dataset::new("t", x, y, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn single_class_training_rejected() {
        let d = Dataset::new("t", Array2::zeros((10, 2)), vec![0; 10], vec!["a".into(), "b".into()]).unwrap();
        let spec = LearnerSpec::default_for(LearnerKind::Cart, 2, 0);
        assert!(matches!(fit(&spec, &d), Err(FitError::InsufficientClasses { .. })));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let d = dataset(50, 1);
        for params in [
            Hyperparameters::Logistic { lambda: -1.0, alpha: 0.5 },
            Hyperparameters::Cart { cp: 1.5 },
            Hyperparameters::RandomForest { mtry: 4, n_trees: 10 },
            Hyperparameters::Gbt { nrounds: 10, max_depth: 0, eta: 0.1 },
        ] {
            assert!(fit(&LearnerSpec::new(params, 0), &d).is_err(), "{params:?}");
        }
    }

    #[test]
    fn feature_count_mismatch_on_predict() {
        let d = dataset(60, 2);
        let c = fit(&LearnerSpec::default_for(LearnerKind::Logistic, 3, 0), &d).unwrap();
        assert!(matches!(
            c.predict_proba(Array2::zeros((2, 2)).view()),
            Err(PredictError::FeatureCount { expected: 3, found: 2 })
        ));
        assert!(c.predict_proba(Array2::zeros((0, 3)).view()).unwrap().is_empty());
    }

    #[test]
    fn unused_features_score_zero() {
        // Only column 0 varies, so no tree can split elsewhere.
        let mut rng = crate::seed::rng(3);
        let x = Array2::from_shape_fn((80, 3), |(_, j)| if j == 0 { rng.random::<f64>() } else { 1.0 });
        let y = x.outer_iter().map(|r| u8::from(r[0] > 0.5)).collect();
        let d = Dataset::new("t", x, y, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        for kind in [LearnerKind::Cart, LearnerKind::Gbt, LearnerKind::RandomForest] {
            let mut spec = LearnerSpec::default_for(kind, 3, 0);
            if let Hyperparameters::RandomForest { ref mut n_trees, .. } = spec.params {
                *n_trees = 20;
            }
            let c = fit(&spec, &d).unwrap();
            let s = cs_importance(&c, &d).unwrap();
            assert_eq!(s.get("a"), Some(100.0), "{kind}");
            assert_eq!(&s.values[1..], &[0.0, 0.0], "{kind}");
        }
    }

    #[test]
    fn forest_importance_needs_its_training_set() {
        let d = dataset(60, 4);
        let spec = LearnerSpec::new(Hyperparameters::RandomForest { mtry: 1, n_trees: 5 }, 0);
        let c = fit(&spec, &d).unwrap();
        let other = d.select_rows(&(0..30).collect::<Vec<_>>());
        assert!(matches!(cs_importance(&c, &other), Err(FitError::MissingOobBookkeeping { .. })));
    }

    #[test]
    fn same_seed_same_predictions() {
        let d = dataset(100, 5);
        for kind in LearnerKind::ALL {
            let spec = LearnerSpec::default_for(kind, 3, 9);
            let a = fit(&spec, &d).unwrap().predict_proba(d.features()).unwrap();
            let b = fit(&spec, &d).unwrap().predict_proba(d.features()).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
        }
    }
}
