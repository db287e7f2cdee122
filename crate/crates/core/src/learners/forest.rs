//! Random forest of unpruned Gini trees with per-tree out-of-bag bookkeeping.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{check_width, Model, PredictError};
use super::{shapley_over_trees, sweep_trees};
use super::tree::{grow, subset_sum, Gini, GrowParams, Presorted, Tree};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Training rows never drawn for each tree.
    pub oob: Vec<Vec<u32>>,
    pub n_features: usize,
    pub n_train: usize,
    pub seed: u64,
}

pub fn fit_forest(x: ArrayView2<'_, f64>, y: &[f64], params: &ForestParams, seed: u64) -> ForestModel {
    let n = y.len();
    let crit = Gini { labels: y, min_bucket: 1.0, min_decrease: 0.0 };
    let grow_params = GrowParams { max_depth: 64, min_split: 2, mtry: Some(params.mtry.clamp(1, x.ncols())) };
    let presorted = Presorted::new(x);
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut oob = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = seed::rng_for(seed, &[t as u64]);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut drawn = vec![false; n];
        for &r in &rows {
            drawn[r] = true;
        }
        oob.push((0..n as u32).filter(|&r| !drawn[r as usize]).collect());
        trees.push(grow(x, &presorted, &rows, &crit, &grow_params, &mut rng));
    }
    ForestModel { trees, oob, n_features: x.ncols(), n_train: n, seed }
}

impl ForestModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean over trees of (OOB misclassification rate with feature j
    /// permuted among the tree's OOB rows) minus (unpermuted OOB rate).
    /// `x`/`y` must be the training data the forest was fit on.
    pub fn oob_permutation_importance(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> Vec<f64> {
        let p = self.n_features;
        let mut total = vec![0.0; p];
        let mut used = 0usize;
        let mut row = vec![0.0; p];
        for (t, (tree, oob)) in self.trees.iter().zip(&self.oob).enumerate() {
            if oob.is_empty() {
                continue;
            }
            used += 1;
            let wrong = |tree: &Tree, row: &[f64], label: f64| {
                let class = f64::from(tree.predict_row(row) > 0.5);
                f64::from(class != label)
            };
            let base: f64 = oob
                .iter()
                .map(|&r| wrong(tree, &x.row(r as usize).to_vec(), y[r as usize]))
                .sum::<f64>()
                / oob.len() as f64;
            let mut rng = seed::rng_for(self.seed, &[t as u64, seed::tag("oob-permutation")]);
            for j in 0..p {
                let mut perm: Vec<u32> = oob.clone();
                perm.shuffle(&mut rng);
                let mut err = 0.0;
                for (&r, &donor) in oob.iter().zip(&perm) {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = x[[r as usize, k]];
                    }
                    row[j] = x[[donor as usize, j]];
                    err += wrong(tree, &row, y[r as usize]);
                }
                total[j] += err / oob.len() as f64 - base;
            }
        }
        if used > 0 {
            total.iter_mut().for_each(|v| *v /= used as f64);
        }
        total
    }
}

impl Model for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, rows.ncols())?;
        Ok(rows.outer_iter().map(|r| self.predict_row(&r.to_vec())).collect())
    }

    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features, row.len())?;
        check_width(self.n_features, background.ncols())?;
        super::check_table(self.n_features, background.nrows())?;
        let mut table = vec![0.0; 1 << self.n_features];
        let scale = 1.0 / (background.nrows() * self.trees.len()) as f64;
        for b in background.outer_iter() {
            let b = b.to_vec();
            for tree in &self.trees {
                tree.accumulate_moebius(row, &b, scale, &mut table);
            }
        }
        subset_sum(&mut table);
        Ok(table)
    }

    fn exact_shapley(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Option<Result<Vec<f64>, PredictError>> {
        Some(shapley_over_trees(&self.trees, self.n_features, row, background))
    }

    fn sweep_feature(&self, row: &[f64], j: usize, values: &[f64]) -> Option<Result<Vec<f64>, PredictError>> {
        Some(sweep_trees(&self.trees, self.n_features, row, j, values, 1.0 / self.trees.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::model::enumerate_coalitions;
    use ndarray::Array2;

    fn toy(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let x = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>());
        let y = x.outer_iter().map(|r| f64::from(r[0] + 0.3 * rng.random::<f64>() > 0.65)).collect();
        (x, y)
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = toy(120, 1);
        let p = ForestParams { n_trees: 10, mtry: 2 };
        assert_eq!(fit_forest(x.view(), &y, &p, 3), fit_forest(x.view(), &y, &p, 3));
    }

    #[test]
    fn oob_rows_are_out_of_bag() {
        let (x, y) = toy(60, 2);
        let m = fit_forest(x.view(), &y, &ForestParams { n_trees: 5, mtry: 2 }, 0);
        for oob in &m.oob {
            assert!(!oob.is_empty());
            assert!(oob.len() < 60);
        }
    }

    #[test]
    fn table_matches_enumeration() {
        let (x, y) = toy(80, 3);
        let m = fit_forest(x.view(), &y, &ForestParams { n_trees: 8, mtry: 2 }, 4);
        let bg = x.slice(ndarray::s![..5, ..]);
        let row = x.row(40).to_vec();
        let fast = m.coalition_table(&row, bg).unwrap();
        let slow = enumerate_coalitions(&m, &row, bg).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn signal_feature_dominates_oob_importance() {
        let (x, y) = toy(300, 5);
        let m = fit_forest(x.view(), &y, &ForestParams { n_trees: 50, mtry: 2 }, 6);
        let imp = m.oob_permutation_importance(x.view(), &y);
        assert!(imp[0] > 0.1, "{imp:?}");
        assert!(imp[1..].iter().all(|&v| v < imp[0] / 4.0), "{imp:?}");
    }
}
