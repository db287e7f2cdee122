use rand::seq::SliceRandom;

use super::ExplainError;
use crate::data::Dataset;
use crate::learners::{ImportanceMethod, ImportanceScores, Model};
use crate::{perf, seed};

/// AUC drop when each column is shuffled once. Feature `j` uses the stream
/// `seed -> [j]`. Negative values are kept.
pub fn permutation_importance<M: Model + ?Sized>(model: &M, data: &Dataset, seed: u64) -> Result<ImportanceScores, ExplainError> {
    permutation_importance_with(model, data, |j, perm| perm.shuffle(&mut seed::rng_for(seed, &[j as u64])))
}

/// [`permutation_importance`] with a caller-supplied shuffle: `shuffle(j,
/// perm)` receives the identity permutation of the rows and rearranges it in
/// place; row `i` of the permuted column takes the value at row `perm[i]`.
pub fn permutation_importance_with<M, F>(model: &M, data: &Dataset, mut shuffle: F) -> Result<ImportanceScores, ExplainError>
where
    M: Model + ?Sized,
    F: FnMut(usize, &mut [usize]),
{
    let labels = data.labels();
    let base = perf::auc(&model.predict_proba(data.features())?, labels)?;
    let mut x = data.features().to_owned();
    let n = data.n_rows();
    let mut raw = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let original = x.column(j).to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(j, &mut perm);
        for (i, &src) in perm.iter().enumerate() {
            x[[i, j]] = original[src];
        }
        let permuted = perf::auc(&model.predict_proba(x.view())?, labels)?;
        raw.push(base - permuted);
        x.column_mut(j).assign(&ndarray::ArrayView1::from(&original));
    }
    Ok(ImportanceScores::from_raw(ImportanceMethod::Permutation, data.feature_names().to_vec(), raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::PredictError;
    use ndarray::{array, Array2, ArrayView2};

    struct Stub<F: Fn(&[f64]) -> f64 + Send + Sync>(usize, F);

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> Model for Stub<F> {
        fn n_features(&self) -> usize {
            self.0
        }
        fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
            Ok(rows.outer_iter().map(|r| (self.1)(&r.to_vec())).collect())
        }
    }

    fn data(x: Array2<f64>, y: Vec<u8>) -> Dataset {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new("t", x, y, names).unwrap()
    }

    #[test]
    fn ignored_feature_scores_exactly_zero() {
        let x = array![[0.1, 5.0], [0.9, 3.0], [0.4, 1.0], [0.7, 2.0], [0.2, 9.0]];
        let d = data(x, vec![0, 1, 0, 1, 0]);
        let m = Stub(2, |r: &[f64]| r[0]);
        let s = permutation_importance(&m, &d, 3).unwrap();
        assert_eq!(s.raw[1], 0.0);
    }

    #[test]
    fn identity_permutation_gives_zero() {
        let x = array![[0.1, 5.0], [0.9, 3.0], [0.4, 1.0], [0.7, 2.0]];
        let d = data(x, vec![0, 1, 0, 1]);
        let m = Stub(2, |r: &[f64]| r[0] * r[1]);
        let s = permutation_importance_with(&m, &d, |_, _| {}).unwrap();
        assert_eq!(s.raw, vec![0.0, 0.0]);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn mean_over_all_permutations_is_base_minus_half() {
        let x = array![[0.1], [0.2], [0.8], [0.9]];
        let d = data(x, vec![0, 0, 1, 1]);
        let m = Stub(1, |r: &[f64]| r[0]);
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        let mut total = 0.0;
        for p in &perms {
            let s = permutation_importance_with(&m, &d, |_, perm| perm.copy_from_slice(p)).unwrap();
            total += s.raw[0];
        }
        assert!((total / 24.0 - (1.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn monotone_output_transform_invariance() {
        let mut rng = crate::seed::rng(2);
        let x = Array2::from_shape_fn((40, 3), |_| rand::Rng::random::<f64>(&mut rng));
        let y = x.outer_iter().map(|r| u8::from(r[0] + r[1] > 1.0)).collect();
        let d = data(x, y);
        let f = |r: &[f64]| (r[0] + 0.5 * r[1] + 0.1 * r[2]) / 1.6;
        let a = permutation_importance(&Stub(3, f), &d, 9).unwrap();
        let b = permutation_importance(&Stub(3, move |r: &[f64]| f(r).powi(3)), &d, 9).unwrap();
        assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn input_is_untouched_and_single_class_errors() {
        let x = array![[0.1, 5.0], [0.9, 3.0], [0.4, 1.0]];
        let d = data(x.clone(), vec![0, 1, 0]);
        permutation_importance(&Stub(2, |r: &[f64]| r[0]), &d, 1).unwrap();
        assert_eq!(d.features(), x.view());
        let single = data(x, vec![1, 1, 1]);
        assert!(matches!(permutation_importance(&Stub(2, |r: &[f64]| r[0]), &single, 1), Err(ExplainError::Perf(_))));
    }
}
