//! Gradient-boosted trees on the logistic loss with second-order leaf
//! weights (L2 leaf penalty 1, minimum child hessian 1, base margin 0).

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::model::{check_width, Model, PredictError};
use super::sweep_trees;
use super::tree::{grow, subset_sum, GrowParams, Newton, Presorted, Tree};
use crate::stats::sigmoid;

pub const LEAF_L2: f64 = 1.0;
pub const MIN_CHILD_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub nrounds: usize,
    pub max_depth: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

pub fn fit_gbt(x: ArrayView2<'_, f64>, y: &[f64], params: &GbtParams) -> GbtModel {
    let n = y.len();
    let rows: Vec<usize> = (0..n).collect();
    let mut margin = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let grow_params = GrowParams { max_depth: params.max_depth, min_split: 2, mtry: None };
    let mut rng = crate::seed::rng(0);
    let presorted = Presorted::new(x);
    let xs = x.as_standard_layout();
    let mut trees = Vec::with_capacity(params.nrounds);
    for _ in 0..params.nrounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let crit = Newton { grad: &grad, hess: &hess, lambda: LEAF_L2, min_child_weight: MIN_CHILD_WEIGHT };
        let mut tree = grow(x, &presorted, &rows, &crit, &grow_params, &mut rng);
        for node in tree.nodes.iter_mut() {
            node.value *= params.eta;
        }
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(xs.row(i).as_slice().expect("standard layout"));
        }
        trees.push(tree);
    }
    GbtModel { trees, n_features: x.ncols() }
}

impl GbtModel {
    fn margin(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum()
    }

    /// Number of splits on each feature across all trees.
    pub fn split_counts(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in t.internal_nodes() {
                counts[node.feature as usize] += 1.0;
            }
        }
        counts
    }

    /// Summed split gain per feature.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut gain = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in t.internal_nodes() {
                gain[node.feature as usize] += node.gain;
            }
        }
        gain
    }
}

impl Model for GbtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, rows.ncols())?;
        Ok(rows.outer_iter().map(|r| sigmoid(self.margin(&r.to_vec()))).collect())
    }

    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, row.len())?;
        check_width(self.n_features, background.ncols())?;
        super::check_table(self.n_features, background.nrows())?;
        let size = 1 << self.n_features;
        let mut out = vec![0.0; size];
        let mut margins = vec![0.0; size];
        let m = background.nrows() as f64;
        for b in background.outer_iter() {
            let b = b.to_vec();
            margins.iter_mut().for_each(|v| *v = 0.0);
            for tree in &self.trees {
                tree.accumulate_moebius(row, &b, 1.0, &mut margins);
            }
            subset_sum(&mut margins);
            for (o, mg) in out.iter_mut().zip(&margins) {
                *o += sigmoid(*mg) / m;
            }
        }
        Ok(out)
    }

    fn sweep_feature(&self, row: &[f64], j: usize, values: &[f64]) -> Option<Result<Vec<f64>, PredictError>> {
        Some(sweep_trees(&self.trees, self.n_features, row, j, values, 1.0).map(|m| m.into_iter().map(sigmoid).collect()))
    }
}
