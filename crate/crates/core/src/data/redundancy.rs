use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, MIN_FEATURES};
use crate::stats;

/// Which stage removed each feature, in removal order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub correlated: Vec<String>,
    pub inflated: Vec<String>,
}

impl RedundancyReport {
    pub fn removed(&self) -> Vec<String> {
        self.correlated.iter().chain(&self.inflated).cloned().collect()
    }
}

/// Two-stage correlation and redundancy filter.
///
/// Stage one repeatedly takes the pair with the largest Spearman |rho| at or
/// above `rho_threshold` and drops the member with the higher mean |rho|
/// against the other surviving features (ties drop the later column). Stage two
/// repeatedly drops the feature with the largest variance inflation factor
/// while it is at or above `vif_threshold`.
pub fn spearman_redundancy_filter(
    d: &Dataset,
    rho_threshold: f64,
    vif_threshold: f64,
) -> Result<(Dataset, RedundancyReport), DataError> {
    if !(rho_threshold > 0.0 && rho_threshold <= 1.0) {
        return Err(DataError::InvalidParameter(format!("rho threshold {rho_threshold} not in (0, 1]")));
    }
    if !(vif_threshold > 1.0) {
        return Err(DataError::InvalidParameter(format!("VIF threshold {vif_threshold} must exceed 1")));
    }
    let p = d.n_features();
    let ranks: Vec<Vec<f64>> = (0..p).map(|j| stats::midranks(&d.column(j))).collect();
    let mut rho = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let r = stats::pearson(&ranks[i], &ranks[j]).abs();
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }

    let mut alive: Vec<usize> = (0..p).collect();
    let mut report = RedundancyReport::default();

    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for (a, &i) in alive.iter().enumerate() {
            for &j in &alive[a + 1..] {
                if rho[i][j] >= rho_threshold && worst.is_none_or(|(_, _, w)| rho[i][j] > w) {
                    worst = Some((i, j, rho[i][j]));
                }
            }
        }
        let Some((i, j, _)) = worst else { break };
        let mean_abs = |f: usize| {
            let others: Vec<f64> = alive.iter().filter(|&&g| g != f).map(|&g| rho[f][g]).collect();
            stats::mean(&others)
        };
        // i < j always, so ties fall to the later column.
        let drop = if mean_abs(i) > mean_abs(j) { i } else { j };
        alive.retain(|&f| f != drop);
        report.correlated.push(d.feature_names()[drop].clone());
    }

    while alive.len() > 1 {
        let sub = d.features().select(ndarray::Axis(1), &alive);
        let mut worst: Option<(usize, f64)> = None;
        for k in 0..alive.len() {
            let v = variance_inflation(sub.view(), k);
            if v >= vif_threshold && worst.is_none_or(|(_, w)| v >= w) {
                worst = Some((k, v));
            }
        }
        let Some((k, _)) = worst else { break };
        let drop = alive.remove(k);
        report.inflated.push(d.feature_names()[drop].clone());
    }

    if alive.len() < MIN_FEATURES {
        return Err(DataError::TooFewFeatures { found: alive.len(), required: MIN_FEATURES });
    }
    Ok((d.select_features(&alive), report))
}

/// Variance inflation factor of column `j`: TSS / RSS of the least-squares
/// regression of column `j` on an intercept and every other column. Exact
/// collinearity (including a constant column) yields infinity.
pub fn variance_inflation(x: ArrayView2<'_, f64>, j: usize) -> f64 {
    let (n, p) = x.dim();
    let y = DVector::from_iterator(n, x.column(j).iter().copied());
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if tss <= 0.0 {
        return f64::INFINITY;
    }
    if p == 1 {
        return 1.0;
    }
    let others: Vec<usize> = (0..p).filter(|&c| c != j).collect();
    let design = DMatrix::from_fn(n, others.len() + 1, |r, c| if c == 0 { 1.0 } else { x[[r, others[c - 1]]] });
    let svd = design.clone().svd(true, true);
    let beta = match svd.solve(&y, 1e-12) {
        Ok(b) => b,
        Err(_) => return f64::INFINITY,
    };
    let resid = &y - &design * beta;
    let rss = resid.norm_squared();
    if rss <= 1e-12 * tss {
        f64::INFINITY
    } else {
        tss / rss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn dataset(cols: Vec<Vec<f64>>, names: &[&str]) -> Dataset {
        let n = cols[0].len();
        let x = Array2::from_shape_fn((n, cols.len()), |(r, c)| cols[c][r]);
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new("t", x, labels, names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::rng(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn exact_copy_loses_one_member() {
        let a = noise(200, 1);
        let (out, report) =
            spearman_redundancy_filter(&dataset(vec![a.clone(), a, noise(200, 2)], &["A", "B", "N"]), 0.7, 5.0)
                .unwrap();
        assert_eq!(report.correlated.len(), 1);
        assert!(report.correlated[0] == "A" || report.correlated[0] == "B");
        assert_eq!(out.n_features(), 2);
        assert!(report.inflated.is_empty());
    }

    #[test]
    fn independent_noise_survives() {
        let cols: Vec<Vec<f64>> = (0..6).map(|s| noise(1000, 10 + s)).collect();
        let d = dataset(cols, &["a", "b", "c", "d", "e", "f"]);
        let (out, report) = spearman_redundancy_filter(&d, 0.7, 5.0).unwrap();
        assert_eq!(out.n_features(), 6);
        assert!(report.removed().is_empty());
    }

    #[test]
    fn exact_sum_is_removed_in_vif_stage() {
        // Spearman |rho| between a summand and the sum stays near 0.7 for
        // uniforms, so use a loose rho threshold to isolate the VIF stage.
        let a = noise(300, 3);
        let b = noise(300, 4);
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let d = dataset(vec![a, b, c], &["A", "B", "C"]);
        let (out, report) = spearman_redundancy_filter(&d, 0.95, 5.0).unwrap();
        assert!(report.correlated.is_empty());
        assert_eq!(report.inflated, vec!["C".to_string()]);
        assert_eq!(out.feature_names(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn vif_matches_explicit_normal_equations() {
        // 3-column toy: regress column 0 on an intercept and columns 1, 2 by
        // solving the 3x3 normal equations by Cramer's rule.
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x2 = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let x3 = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0];
        let m = Array2::from_shape_fn((6, 3), |(r, c)| [x1, x2, x3][c][r]);
        let n = 6.0;
        let s = |a: &[f64]| a.iter().sum::<f64>();
        let sp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let g = [
            [n, s(&x2), s(&x3)],
            [s(&x2), sp(&x2, &x2), sp(&x2, &x3)],
            [s(&x3), sp(&x3, &x2), sp(&x3, &x3)],
        ];
        let rhs = [s(&x1), sp(&x2, &x1), sp(&x3, &x1)];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let dg = det3(g);
        let beta: Vec<f64> = (0..3)
            .map(|k| {
                let mut mk = g;
                for r in 0..3 {
                    mk[r][k] = rhs[r];
                }
                det3(mk) / dg
            })
            .collect();
        let mean1 = s(&x1) / n;
        let (mut rss, mut tss) = (0.0, 0.0);
        for r in 0..6 {
            let fit = beta[0] + beta[1] * x2[r] + beta[2] * x3[r];
            rss += (x1[r] - fit).powi(2);
            tss += (x1[r] - mean1).powi(2);
        }
        let expected = tss / rss;
        assert!((variance_inflation(m.view(), 0) - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn filter_is_idempotent() {
        let a = noise(300, 5);
        let b: Vec<f64> = a.iter().zip(noise(300, 6)).map(|(x, e)| x + 0.2 * e).collect();
        let c = noise(300, 7);
        let dd: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x + y).collect();
        let d = dataset(vec![a, b, c, dd, noise(300, 8)], &["a", "b", "c", "d", "e"]);
        let (once, _) = spearman_redundancy_filter(&d, 0.7, 5.0).unwrap();
        let (twice, report) = spearman_redundancy_filter(&once, 0.7, 5.0).unwrap();
        assert!(report.removed().is_empty());
        assert_eq!(once, twice);
    }

    #[test]
    fn too_few_survivors() {
        let a = noise(50, 9);
        let d = dataset(vec![a.clone(), a], &["a", "b"]);
        assert!(matches!(spearman_redundancy_filter(&d, 0.7, 5.0), Err(DataError::TooFewFeatures { .. })));
    }

    #[test]
    fn invalid_thresholds() {
        let d = dataset(vec![noise(20, 1), noise(20, 2)], &["a", "b"]);
        assert!(spearman_redundancy_filter(&d, 0.0, 5.0).is_err());
        assert!(spearman_redundancy_filter(&d, 0.7, 1.0).is_err());
    }
}
