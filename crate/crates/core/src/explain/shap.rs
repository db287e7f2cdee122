use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::learners::{ImportanceMethod, ImportanceScores, Model, PredictError};
use crate::seed;

/// Largest feature count accepted by exact mode.
pub const MAX_EXACT_FEATURES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapMode {
    /// Full enumeration of the `2^p` coalitions.
    Exact,
    /// Kernel-weighted regression over `n_coalitions` drawn coalitions. When
    /// `n_coalitions >= 2^p - 2` every proper coalition is used instead.
    Sampled { n_coalitions: usize, seed: u64 },
}

/// Signed Shapley values for a block of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// rows x features.
    pub per_row: Array2<f64>,
    /// Mean prediction over the background sample.
    pub base_value: f64,
    /// Model output for each explained row.
    pub predictions: Vec<f64>,
    /// Indices of the background rows in their source table, when known.
    pub background: Vec<usize>,
}

impl ShapExplanation {
    /// Largest `|base + sum(phi) - prediction|` over rows.
    pub fn max_efficiency_gap(&self) -> f64 {
        self.per_row
            .outer_iter()
            .zip(&self.predictions)
            .map(|(r, p)| (self.base_value + r.sum() - p).abs())
            .fold(0.0, f64::max)
    }
}

/// `w[s] = s! (p - s - 1)! / p!` for `s` in `0..p`.
pub fn shapley_weights(p: usize) -> Vec<f64> {
    (0..p)
        .map(|s| {
            // 1 / (p * C(p - 1, s)), built up multiplicatively.
            let mut c = 1.0;
            for i in 0..s {
                c = c * (p - 1 - i) as f64 / (i + 1) as f64;
            }
            1.0 / (p as f64 * c)
        })
        .collect()
}

/// Draw up to `size` background rows without replacement, sorted.
pub fn sample_background(n_rows: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n_rows {
        return (0..n_rows).collect();
    }
    let mut rng = seed::rng(seed);
    let mut idx = index::sample(&mut rng, n_rows, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Interventional Shapley values of `model` at each row of `rows`, with
/// features outside a coalition filled in from `background`.
pub fn shap_values<M: Model + ?Sized>(
    model: &M,
    rows: ArrayView2<'_, f64>,
    background: ArrayView2<'_, f64>,
    mode: ShapMode,
) -> Result<ShapExplanation, ExplainError> {
    let p = model.n_features();
    for found in [rows.ncols(), background.ncols()] {
        if found != p {
            return Err(PredictError::FeatureCount { expected: p, found }.into());
        }
    }
    if background.nrows() == 0 {
        return Err(PredictError::EmptyBackground.into());
    }
    let full_enumeration = match mode {
        ShapMode::Exact => {
            if p > MAX_EXACT_FEATURES {
                return Err(ExplainError::TooManyFeatures { max: MAX_EXACT_FEATURES, found: p });
            }
            true
        }
        ShapMode::Sampled { n_coalitions, .. } => {
            if n_coalitions < p + 2 {
                return Err(ExplainError::TooFewCoalitions { required: p + 2, found: n_coalitions });
            }
            p < 63 && n_coalitions as u128 + 2 >= 1u128 << p
        }
    };
    let base_value = {
        let preds = model.predict_proba(background)?;
        preds.iter().sum::<f64>() / preds.len() as f64
    };
    let predictions = model.predict_proba(rows)?;
    let rows_phi: Vec<Vec<f64>> = (0..rows.nrows())
        .into_par_iter()
        .map(|i| {
            let row = rows.row(i).to_vec();
            match mode {
                ShapMode::Exact => exact_row(model, &row, background),
                ShapMode::Sampled { .. } if full_enumeration => full_kernel_row(model, &row, background),
                ShapMode::Sampled { n_coalitions, seed } => sampled_row(
                    model,
                    &row,
                    background,
                    base_value,
                    predictions[i],
                    n_coalitions,
                    seed::derive(seed, &[i as u64]),
                ),
            }
        })
        .collect::<Result<_, _>>()?;
    let mut per_row = Array2::zeros((rows.nrows(), p));
    for (i, phi) in rows_phi.iter().enumerate() {
        per_row.row_mut(i).assign(&ndarray::ArrayView1::from(phi));
    }
    Ok(ShapExplanation { per_row, base_value, predictions, background: Vec::new() })
}

fn exact_row<M: Model + ?Sized>(model: &M, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, ExplainError> {
    if let Some(phi) = model.exact_shapley(row, background) {
        return Ok(phi?);
    }
    let p = row.len();
    let v = model.coalition_table(row, background)?;
    let w = shapley_weights(p);
    let mut phi = vec![0.0; p];
    for (j, out) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut acc = 0.0;
        for s in 0..v.len() {
            if s & bit == 0 {
                acc += w[s.count_ones() as usize] * (v[s | bit] - v[s]);
            }
        }
        *out = acc;
    }
    Ok(phi)
}

/// Kernel weight of a coalition of size `s` (0 < s < p), up to a constant.
fn kernel_weight(p: usize, s: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..s {
        c = c * (p - i) as f64 / (i + 1) as f64;
    }
    (p - 1) as f64 / (c * s as f64 * (p - s) as f64)
}

/// Solve the kernel regression with the efficiency constraint substituted
/// out: the last feature's value is `total - sum(others)`.
fn solve_kernel(p: usize, masks: &[u64], weights: &[f64], values: &[f64], v0: f64, fx: f64) -> Vec<f64> {
    let total = fx - v0;
    if p == 1 {
        return vec![total];
    }
    let q = p - 1;
    let last = 1u64 << q;
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for ((&mask, &w), &v) in masks.iter().zip(weights).zip(values) {
        let zl = f64::from(u8::from(mask & last != 0));
        let z: Vec<f64> = (0..q).map(|j| f64::from(u8::from(mask >> j & 1 == 1)) - zl).collect();
        let y = v - v0 - zl * total;
        for r in 0..q {
            if z[r] == 0.0 {
                continue;
            }
            rhs[r] += w * z[r] * y;
            for c in 0..q {
                a[(r, c)] += w * z[r] * z[c];
            }
        }
    }
    let sol = a.clone().cholesky().map(|ch| ch.solve(&rhs)).unwrap_or_else(|| {
        a.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(q))
    });
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    phi
}

fn full_kernel_row<M: Model + ?Sized>(model: &M, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, ExplainError> {
    let p = row.len();
    let v = model.coalition_table(row, background)?;
    let full = (1u64 << p) - 1;
    let masks: Vec<u64> = (1..full).collect();
    let weights: Vec<f64> = masks.iter().map(|m| kernel_weight(p, m.count_ones() as usize)).collect();
    let values: Vec<f64> = masks.iter().map(|&m| v[m as usize]).collect();
    Ok(solve_kernel(p, &masks, &weights, &values, v[0], v[full as usize]))
}

fn sampled_row<M: Model + ?Sized>(
    model: &M,
    row: &[f64],
    background: ArrayView2<'_, f64>,
    v0: f64,
    fx: f64,
    n_coalitions: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError> {
    let p = row.len();
    let mut rng = seed::rng(seed);
    // Coalition sizes are drawn in proportion to their total kernel mass,
    // members uniformly within a size; each draw then carries equal weight.
    let size_mass: Vec<f64> = (1..p).map(|s| (p - 1) as f64 / (s * (p - s)) as f64).collect();
    let mass_total: f64 = size_mass.iter().sum();
    let mut coalitions: Vec<Vec<usize>> = Vec::with_capacity(n_coalitions);
    for _ in 0..n_coalitions {
        let mut u = rng.random::<f64>() * mass_total;
        let mut s = p - 1;
        for (k, m) in size_mass.iter().enumerate() {
            if u < *m {
                s = k + 1;
                break;
            }
            u -= m;
        }
        coalitions.push(index::sample(&mut rng, p, s).into_vec());
    }
    let m = background.nrows();
    let mut hybrid = Array2::zeros((coalitions.len() * m, p));
    for (c, members) in coalitions.iter().enumerate() {
        for (k, b) in background.outer_iter().enumerate() {
            let mut out = hybrid.row_mut(c * m + k);
            out.assign(&b);
            for &j in members {
                out[j] = row[j];
            }
        }
    }
    let preds = model.predict_proba(hybrid.view())?;
    let values: Vec<f64> = preds.chunks(m).map(|c| c.iter().sum::<f64>() / m as f64).collect();
    if p >= 64 {
        // Bitmask encoding caps out; fall back to an explicit design matrix.
        return Ok(solve_dense(p, &coalitions, &values, v0, fx));
    }
    let masks: Vec<u64> = coalitions.iter().map(|c| c.iter().fold(0u64, |acc, &j| acc | 1 << j)).collect();
    Ok(solve_kernel(p, &masks, &vec![1.0; masks.len()], &values, v0, fx))
}

fn solve_dense(p: usize, coalitions: &[Vec<usize>], values: &[f64], v0: f64, fx: f64) -> Vec<f64> {
    let total = fx - v0;
    let q = p - 1;
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for (members, &v) in coalitions.iter().zip(values) {
        let mut z = vec![0.0; p];
        for &j in members {
            z[j] = 1.0;
        }
        let zl = z[q];
        let y = v - v0 - zl * total;
        for r in 0..q {
            rhs[r] += (z[r] - zl) * y;
            for c in 0..q {
                a[(r, c)] += (z[r] - zl) * (z[c] - zl);
            }
        }
    }
    let sol = a.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(q));
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    phi
}

/// Sum of `|phi|` per feature over the explained rows, rescaled to max 100.
pub fn shap_importance(e: &ShapExplanation, feature_names: &[String]) -> Result<ImportanceScores, ExplainError> {
    if feature_names.len() != e.per_row.ncols() {
        return Err(ExplainError::NameCount { expected: e.per_row.ncols(), found: feature_names.len() });
    }
    let raw = e.per_row.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect();
    Ok(ImportanceScores::from_raw(ImportanceMethod::Shap, feature_names.to_vec(), raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    struct Stub<F: Fn(&[f64]) -> f64 + Send + Sync>(usize, F);

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> Model for Stub<F> {
        fn n_features(&self) -> usize {
            self.0
        }
        fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
            Ok(rows.outer_iter().map(|r| (self.1)(&r.to_vec())).collect())
        }
    }

    fn grid(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn weights_sum_to_one_over_coalitions() {
        for p in 1..=10 {
            let w = shapley_weights(p);
            let mut c = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += c * ws;
                c = c * (p - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_model() {
        let g = [|x: f64| 2.0 * x, |x: f64| x * x, |x: f64| x.sin()];
        let m = Stub(3, move |r: &[f64]| g[0](r[0]) + g[1](r[1]) + g[2](r[2]));
        let bg = grid(7, 3, 1);
        let rows = grid(4, 3, 2);
        let e = shap_values(&m, rows.view(), bg.view(), ShapMode::Exact).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mean_bg: f64 = bg.column(j).iter().map(|&v| g[j](v)).sum::<f64>() / 7.0;
                assert!((e.per_row[[i, j]] - (g[j](rows[[i, j]]) - mean_bg)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_feature_table_matches_hand_sum() {
        // Zero background, so v(S) = f(x_S, 0) for x = (1, 1, 1).
        let m = Stub(3, |r: &[f64]| 1.0 * r[0] + 2.0 * r[1] + 3.0 * r[0] * r[1] + 4.0 * r[0] * r[1] * r[2]);
        let e = shap_values(&m, array![[1.0, 1.0, 1.0]].view(), array![[0.0, 0.0, 0.0]].view(), ShapMode::Exact).unwrap();
        let v = |s: &[usize]| {
            let mut x = [0.0; 3];
            for &j in s {
                x[j] = 1.0;
            }
            x[0] + 2.0 * x[1] + 3.0 * x[0] * x[1] + 4.0 * x[0] * x[1] * x[2]
        };
        // phi_j = 1/3 [v(j) - v()] + 1/6 [v(jk) - v(k)] * 2 terms + 1/3 [v(all) - v(others)]
        let hand = |j: usize| {
            let o: Vec<usize> = (0..3).filter(|&k| k != j).collect();
            (v(&[j]) - v(&[])) / 3.0
                + (v(&[j, o[0]]) - v(&[o[0]])) / 6.0
                + (v(&[j, o[1]]) - v(&[o[1]])) / 6.0
                + (v(&[0, 1, 2]) - v(&o)) / 3.0
        };
        for j in 0..3 {
            assert!((e.per_row[[0, j]] - hand(j)).abs() < 1e-12);
        }
        assert!((hand(0) - (1.0 + 1.5 + 4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn null_player_exact_zero() {
        let m = Stub(4, |r: &[f64]| (r[0] * r[2]).tanh() + r[3]);
        let e = shap_values(&m, grid(5, 4, 3).view(), grid(6, 4, 4).view(), ShapMode::Exact).unwrap();
        assert!(e.per_row.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_features_get_equal_credit() {
        let m = Stub(3, |r: &[f64]| (r[0] + r[1]).powi(2) + r[2]);
        let mut rows = grid(5, 3, 5);
        let mut bg = grid(6, 3, 6);
        for mut r in rows.outer_iter_mut().chain(bg.outer_iter_mut()) {
            r[1] = r[0];
        }
        let e = shap_values(&m, rows.view(), bg.view(), ShapMode::Exact).unwrap();
        for r in e.per_row.outer_iter() {
            assert!((r[0] - r[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_coverage_sampling_matches_exact() {
        let m = Stub(5, |r: &[f64]| 1.0 / (1.0 + (-(r[0] * r[1] - r[2] + r[3] * r[4] * r[0])).exp()));
        let rows = grid(3, 5, 7);
        let bg = grid(8, 5, 8);
        let exact = shap_values(&m, rows.view(), bg.view(), ShapMode::Exact).unwrap();
        let sampled = shap_values(&m, rows.view(), bg.view(), ShapMode::Sampled { n_coalitions: 32, seed: 1 }).unwrap();
        for (a, b) in exact.per_row.iter().zip(sampled.per_row.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(sampled.max_efficiency_gap() < 1e-12);
    }

    #[test]
    fn sampled_mode_is_close_and_efficient() {
        let m = Stub(8, |r: &[f64]| r.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum::<f64>() / 36.0 + 0.1 * r[0] * r[1]);
        let rows = grid(2, 8, 9);
        let bg = grid(10, 8, 10);
        let exact = shap_values(&m, rows.view(), bg.view(), ShapMode::Exact).unwrap();
        let sampled = shap_values(&m, rows.view(), bg.view(), ShapMode::Sampled { n_coalitions: 120, seed: 3 }).unwrap();
        assert!(sampled.max_efficiency_gap() < 1e-10);
        for (a, b) in exact.per_row.iter().zip(sampled.per_row.iter()) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn errors() {
        let m = Stub(15, |_: &[f64]| 0.5);
        let z = Array2::zeros((1, 15));
        assert!(matches!(shap_values(&m, z.view(), z.view(), ShapMode::Exact), Err(ExplainError::TooManyFeatures { .. })));
        assert!(matches!(
            shap_values(&m, z.view(), z.view(), ShapMode::Sampled { n_coalitions: 16, seed: 0 }),
            Err(ExplainError::TooFewCoalitions { required: 17, found: 16 })
        ));
        let m = Stub(2, |_: &[f64]| 0.5);
        assert!(matches!(
            shap_values(&m, Array2::zeros((1, 2)).view(), Array2::zeros((0, 2)).view(), ShapMode::Exact),
            Err(ExplainError::Predict(PredictError::EmptyBackground))
        ));
    }

    #[test]
    fn importance_rescaling() {
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let e = |m: Array2<f64>| ShapExplanation { per_row: m, base_value: 0.0, predictions: vec![], background: vec![] };
        let s = shap_importance(&e(Array2::zeros((2, 3))), &names).unwrap();
        assert_eq!(s.values, vec![0.0; 3]);
        let s = shap_importance(&e(array![[0.0, 3.0, 0.0], [0.0, -1.0, 0.0]]), &names).unwrap();
        assert_eq!(s.values, vec![0.0, 100.0, 0.0]);
        let s = shap_importance(&e(array![[4.0, -1.0, 0.0], [-4.0, 3.0, 0.0]]), &names).unwrap();
        assert_eq!(s.values, vec![100.0, 50.0, 0.0]);
        assert!(shap_importance(&e(Array2::zeros((1, 2))), &names).is_err());
    }

    #[test]
    fn background_sampling() {
        assert_eq!(sample_background(5, 64, 1), vec![0, 1, 2, 3, 4]);
        let b = sample_background(1000, 64, 1);
        assert_eq!(b.len(), 64);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(b, sample_background(1000, 64, 1));
    }
}
