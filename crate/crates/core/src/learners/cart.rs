//! Single classification tree: Gini growth with rpart-style cost-complexity
//! control. A split is only attempted when it lowers total risk by at least
//! `cp` times the root risk, and the grown tree is then weakest-link pruned at
//! the same level.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::model::{check_width, Model, PredictError};
use super::{shapley_over_trees, sweep_trees};
use super::tree::{grow, prune_cost_complexity, subset_sum, Gini, GrowParams, Presorted, Tree};

/// Growth controls; `cp` is the only tuned parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub cp: f64,
    pub min_split: usize,
    pub min_bucket: usize,
    pub max_depth: usize,
}

impl CartParams {
    /// rpart defaults: minsplit 20, minbucket 7, maxdepth 30.
    pub fn with_cp(cp: f64) -> Self {
        Self { cp, min_split: 20, min_bucket: 7, max_depth: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartModel {
    pub tree: Tree,
    pub n_features: usize,
    /// Training rows, for normalizing impurity decreases.
    pub n_train: usize,
}

pub fn fit_cart(x: ArrayView2<'_, f64>, y: &[f64], params: &CartParams) -> CartModel {
    let n = y.len();
    let pos: f64 = y.iter().sum();
    let root_risk = 2.0 * pos * (n as f64 - pos) / n as f64;
    let alpha = params.cp * root_risk;
    let crit = Gini { labels: y, min_bucket: params.min_bucket.max(1) as f64, min_decrease: alpha };
    let rows: Vec<usize> = (0..n).collect();
    let grow_params = GrowParams { max_depth: params.max_depth, min_split: params.min_split.max(2), mtry: None };
    let tree = grow(x, &Presorted::new(x), &rows, &crit, &grow_params, &mut crate::seed::rng(0));
    let tree = if params.cp > 0.0 { prune_cost_complexity(&tree, alpha) } else { tree };
    CartModel { tree, n_features: x.ncols(), n_train: n }
}

impl CartModel {
    /// Per-feature sum of Gini risk decreases over all splits, divided by the
    /// training row count.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in self.tree.internal_nodes() {
            imp[node.feature as usize] += node.gain / self.n_train as f64;
        }
        imp
    }
}

impl Model for CartModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, rows.ncols())?;
        Ok(rows.outer_iter().map(|r| self.tree.predict_row(&r.to_vec())).collect())
    }

    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, row.len())?;
        check_width(self.n_features, background.ncols())?;
        super::check_table(self.n_features, background.nrows())?;
        let mut table = vec![0.0; 1 << self.n_features];
        let scale = 1.0 / background.nrows() as f64;
        for b in background.outer_iter() {
            self.tree.accumulate_moebius(row, &b.to_vec(), scale, &mut table);
        }
        subset_sum(&mut table);
        Ok(table)
    }

    fn exact_shapley(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Option<Result<Vec<f64>, PredictError>> {
        Some(shapley_over_trees(std::slice::from_ref(&self.tree), self.n_features, row, background))
    }

    fn sweep_feature(&self, row: &[f64], j: usize, values: &[f64]) -> Option<Result<Vec<f64>, PredictError>> {
        Some(sweep_trees(std::slice::from_ref(&self.tree), self.n_features, row, j, values, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn cp_one_gives_base_rate_leaf() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i * (j + 1)) as f64);
        let y: Vec<f64> = (0..40).map(|i| f64::from(i >= 25)).collect();
        let m = fit_cart(x.view(), &y, &CartParams::with_cp(1.0));
        assert_eq!(m.tree.nodes.len(), 1);
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.iter().all(|&v| (v - 15.0 / 40.0).abs() < 1e-15));
    }

    #[test]
    fn unpruned_tree_predicts_leaf_fractions() {
        // Duplicate x values with mixed labels force impure leaves.
        let x = array![[1.0], [1.0], [1.0], [2.0], [2.0], [3.0], [3.0], [3.0], [3.0]];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let params = CartParams { cp: 0.0, min_split: 2, min_bucket: 1, max_depth: 30 };
        let m = fit_cart(x.view(), &y, &params);
        let p = m.predict_proba(x.view()).unwrap();
        let expected = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0, 1.0, 0.25, 0.25, 0.25, 0.25];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_split_gini_decrease() {
        // 10 rows, 5/5 classes; x1 in {0, 1} splits into (4 pos, 1 neg) and
        // (1 pos, 4 neg). Root Gini 0.5, child Gini 2 * 0.8 * 0.2 = 0.32, so
        // the per-row decrease is 0.5 - 0.32 = 0.18.
        let x1 = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y = [1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let x = Array2::from_shape_fn((10, 3), |(i, j)| if j == 0 { x1[i] } else { 3.0 });
        let params = CartParams { cp: 0.0, min_split: 2, min_bucket: 1, max_depth: 30 };
        let m = fit_cart(x.view(), &y, &params);
        let imp = m.impurity_importance();
        assert!((imp[0] - 0.18).abs() < 1e-12, "{imp:?}");
        assert_eq!(&imp[1..], &[0.0, 0.0]);
    }
}
