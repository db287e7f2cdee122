//! Partial dependence, one-vs-rest Friedman H statistics, and synthetic
//! ground-truth datasets.

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::learners::{self, LearnerKind, LearnerSpec, Model, PredictError};
use crate::{seed, stats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InteractionError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Fit(#[from] learners::FitError),
    #[error("no rows to average over")]
    EmptyData,
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("feature index {0} out of range")]
    BadFeature(usize),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("interaction statistics need at least 2 features")]
    TooFewFeatures,
    #[error("repeats must be at least 1")]
    ZeroRepeats,
}

/// Default cap on rows used per H evaluation.
pub const H_SUBSAMPLE: usize = 300;
/// Default number of H evaluations per feature.
pub const H_REPEATS: usize = 10;
pub const H_FLAG_LOW: f64 = 0.3;
pub const H_FLAG_HIGH: f64 = 0.5;

/// Mean prediction over `data` with the columns in `features` overwritten by
/// each row of `grid` (one grid column per entry of `features`).
pub fn partial_dependence<M: Model + ?Sized>(
    model: &M,
    data: ArrayView2<'_, f64>,
    features: &[usize],
    grid: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, InteractionError> {
    if features.is_empty() {
        return Err(InteractionError::EmptyFeatureSet);
    }
    if data.nrows() == 0 {
        return Err(InteractionError::EmptyData);
    }
    if let Some(&bad) = features.iter().find(|&&j| j >= data.ncols()) {
        return Err(InteractionError::BadFeature(bad));
    }
    if grid.ncols() != features.len() {
        return Err(PredictError::FeatureCount { expected: features.len(), found: grid.ncols() }.into());
    }
    let mut work = data.to_owned();
    let n = data.nrows() as f64;
    let mut out = Vec::with_capacity(grid.nrows());
    for g in grid.outer_iter() {
        for (&j, &v) in features.iter().zip(g.iter()) {
            work.column_mut(j).fill(v);
        }
        out.push(model.predict_proba(work.view())?.iter().sum::<f64>() / n);
    }
    Ok(out)
}

/// Partial dependence evaluated at the observed values of `features` in each
/// row of `data`.
pub fn partial_dependence_at_rows<M: Model + ?Sized>(
    model: &M,
    data: ArrayView2<'_, f64>,
    features: &[usize],
) -> Result<Vec<f64>, InteractionError> {
    if let Some(&bad) = features.iter().find(|&&j| j >= data.ncols()) {
        return Err(InteractionError::BadFeature(bad));
    }
    let grid = Array2::from_shape_fn((data.nrows(), features.len()), |(i, k)| data[[i, features[k]]]);
    partial_dependence(model, data, features, grid.view())
}

fn centered(v: &mut [f64]) {
    let m = stats::mean(v);
    for x in v.iter_mut() {
        *x -= m;
    }
}

/// One-vs-rest H of feature `j`, evaluated on every row of `x`.
///
/// With `G[i][k]` the prediction at row `k` with feature `j` set to row
/// `i`'s value, `PD_j(x_i)` is the mean of row `i` of `G`, `PD_-j(x_k)` the
/// mean of column `k`, and `f(x_i) = G[i][i]`.
pub fn friedman_h_on<M: Model + ?Sized>(model: &M, x: ArrayView2<'_, f64>, j: usize) -> Result<f64, InteractionError> {
    let n = x.nrows();
    if n == 0 {
        return Err(InteractionError::EmptyData);
    }
    if x.ncols() < 2 {
        return Err(InteractionError::TooFewFeatures);
    }
    if j >= x.ncols() {
        return Err(InteractionError::BadFeature(j));
    }
    let mut pd_j = vec![0.0; n];
    let mut pd_rest = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
    let values: Vec<f64> = order.iter().map(|&i| x[[i, j]]).collect();
    if model.sweep_feature(&x.row(0).to_vec(), j, &values).is_some() {
        // Column k of G in one pass per row.
        for k in 0..n {
            let col = model.sweep_feature(&x.row(k).to_vec(), j, &values).expect("sweep support is per model")?;
            for (&i, g) in order.iter().zip(col) {
                pd_j[i] += g / n as f64;
                pd_rest[k] += g / n as f64;
                if i == k {
                    f[k] = g;
                }
            }
        }
    } else {
        let mut work = x.to_owned();
        for i in 0..n {
            work.column_mut(j).fill(x[[i, j]]);
            let preds = model.predict_proba(work.view())?;
            pd_j[i] = preds.iter().sum::<f64>() / n as f64;
            for (acc, p) in pd_rest.iter_mut().zip(&preds) {
                *acc += p / n as f64;
            }
            f[i] = preds[i];
        }
    }
    centered(&mut f);
    centered(&mut pd_j);
    centered(&mut pd_rest);
    let denom: f64 = f.iter().map(|v| v * v).sum();
    if denom <= f64::EPSILON * f64::EPSILON * n as f64 {
        return Ok(0.0);
    }
    let num: f64 = (0..n).map(|i| (f[i] - pd_j[i] - pd_rest[i]).powi(2)).sum();
    Ok((num / denom).sqrt())
}

fn subsample(x: ArrayView2<'_, f64>, max_rows: usize, seed: u64) -> Array2<f64> {
    if x.nrows() <= max_rows {
        return x.to_owned();
    }
    let mut idx = index::sample(&mut seed::rng(seed), x.nrows(), max_rows).into_vec();
    idx.sort_unstable();
    x.select(ndarray::Axis(0), &idx)
}

/// H for every feature on one seeded subsample of at most `max_rows` rows.
pub fn friedman_h_all<M: Model + ?Sized>(model: &M, data: &Dataset, max_rows: usize, seed: u64) -> Result<Vec<f64>, InteractionError> {
    let x = subsample(data.features(), max_rows, seed);
    (0..data.n_features()).map(|j| friedman_h_on(model, x.view(), j)).collect()
}

/// One-vs-rest H of a named feature on a subsample of at most 300 rows.
pub fn friedman_h<M: Model + ?Sized>(model: &M, data: &Dataset, feature: &str, seed: u64) -> Result<f64, InteractionError> {
    let j = data.feature_index(feature).ok_or_else(|| InteractionError::UnknownFeature(feature.to_string()))?;
    let x = subsample(data.features(), H_SUBSAMPLE, seed);
    friedman_h_on(model, x.view(), j)
}

/// Median H per feature over repeated subsamples, with threshold flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionProfile {
    pub features: Vec<String>,
    pub median_h: Vec<f64>,
    pub repeats: usize,
    /// `median_h >= 0.3`
    pub flag_low: Vec<bool>,
    /// `median_h >= 0.5`
    pub flag_high: Vec<bool>,
}

impl InteractionProfile {
    pub fn from_medians(features: Vec<String>, median_h: Vec<f64>, repeats: usize) -> Self {
        let flag_low = median_h.iter().map(|&h| h >= H_FLAG_LOW).collect();
        let flag_high = median_h.iter().map(|&h| h >= H_FLAG_HIGH).collect();
        Self { features, median_h, repeats, flag_low, flag_high }
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.median_h[i])
    }

    pub fn count_low(&self) -> usize {
        self.flag_low.iter().filter(|&&b| b).count()
    }

    pub fn count_high(&self) -> usize {
        self.flag_high.iter().filter(|&&b| b).count()
    }
}

/// Median H over `repeats` subsamples (each at most `max_rows` rows, drawn
/// from the stream `seed -> [r]`).
pub fn interaction_profile_with<M: Model + ?Sized>(
    model: &M,
    data: &Dataset,
    repeats: usize,
    max_rows: usize,
    seed: u64,
) -> Result<InteractionProfile, InteractionError> {
    if repeats == 0 {
        return Err(InteractionError::ZeroRepeats);
    }
    let runs: Vec<Vec<f64>> = (0..repeats)
        .map(|r| friedman_h_all(model, data, max_rows, seed::derive(seed, &[r as u64])))
        .collect::<Result<_, _>>()?;
    let medians = (0..data.n_features())
        .map(|j| stats::median(&runs.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    Ok(InteractionProfile::from_medians(data.feature_names().to_vec(), medians, repeats))
}

pub fn interaction_profile<M: Model + ?Sized>(
    model: &M,
    data: &Dataset,
    repeats: usize,
    seed: u64,
) -> Result<InteractionProfile, InteractionError> {
    interaction_profile_with(model, data, repeats, H_SUBSAMPLE, seed)
}

/// Fit the default random-forest surrogate on all of `data` and profile it.
pub fn surrogate_profile(data: &Dataset, repeats: usize, max_rows: usize, seed: u64) -> Result<InteractionProfile, InteractionError> {
    let spec = LearnerSpec::default_for(LearnerKind::RandomForest, data.n_features(), seed::derive(seed, &[seed::tag("surrogate")]));
    let model = learners::fit(&spec, data)?;
    interaction_profile_with(&model, data, repeats, max_rows, seed)
}

/// Parameters of the synthetic ground-truth generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub with_interactions: bool,
    pub seed: u64,
    pub signal_weights: [f64; 5],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_rows: 1500, with_interactions: false, seed: 0, signal_weights: [20.0, 10.0, 5.0, 2.5, 0.5] }
    }
}

impl SyntheticSpec {
    pub fn new(n_rows: usize, with_interactions: bool, seed: u64) -> Self {
        Self { n_rows, with_interactions, seed, ..Self::default() }
    }

    pub const FEATURES: [&'static str; 11] = ["x1", "x2", "x3", "x4", "x5", "n1", "n2", "n3", "n4", "n5", "n6"];
    pub const LABEL: &'static str = "y";

    /// Expected top-3 features, most important first.
    pub fn ground_truth_top3(&self) -> [&'static str; 3] {
        ["x1", "x2", "x3"]
    }

    /// Names of the hidden product terms, empty without interactions.
    pub fn interaction_terms(&self) -> Vec<&'static str> {
        if self.with_interactions {
            vec!["x1*x3", "x2*x3", "x2*x1"]
        } else {
            Vec::new()
        }
    }

    /// Linear predictor for signal values `x1..x5`.
    pub fn signal(&self, x: &[f64]) -> f64 {
        let mut y: f64 = self.signal_weights.iter().zip(x).map(|(w, v)| w * v).sum();
        if self.with_interactions {
            y += x[0] * x[2] + x[1] * x[2] + x[1] * x[0];
        }
        y
    }
}

/// Draw the synthetic dataset. Per row the stream yields x1..x5 and n1 from
/// N(0, 1), n2..n4 from U(0, 1), n5 and n6 from N(0, 1), then one uniform
/// for the Bernoulli label with probability `sigmoid(signal)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Dataset {
    let mut rng = seed::rng(spec.seed);
    let n = spec.n_rows;
    let mut x = Array2::zeros((n, 11));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..11 {
            x[[i, j]] = if (6..9).contains(&j) { rng.random::<f64>() } else { rng.sample(StandardNormal) };
        }
        let s = spec.signal(&x.row(i).as_slice().expect("row-major")[..5]);
        y.push(u8::from(rng.random::<f64>() < stats::sigmoid(s)));
    }
    let name = if spec.with_interactions { "synthetic_interactions" } else { "synthetic_additive" };
    let names = SyntheticSpec::FEATURES.iter().map(|s| s.to_string()).collect();
    Dataset::new(name, x, y, names).expect("generator output is well formed")
}
