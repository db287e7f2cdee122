//! Scott-Knott effect-size-difference ranking of bootstrap score
//! distributions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("no features to rank")]
    Empty,
    #[error("feature `{feature}` has {found} scores, expected {expected}")]
    RaggedScores { feature: String, expected: usize, found: usize },
    #[error("at least 2 scores per feature are required, found {0}")]
    TooFewScores(usize),
    #[error("non-finite score for feature `{0}`")]
    NonFinite(String),
    #[error("effect-size threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// Bootstrap importance scores per feature for one (dataset, classifier,
/// method) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistributions {
    scores: BTreeMap<String, Vec<f64>>,
}

impl ScoreDistributions {
    pub fn new(scores: BTreeMap<String, Vec<f64>>) -> Result<Self, RankingError> {
        let Some(k) = scores.values().next().map(Vec::len) else { return Err(RankingError::Empty) };
        if k < 2 {
            return Err(RankingError::TooFewScores(k));
        }
        for (f, v) in &scores {
            if v.len() != k {
                return Err(RankingError::RaggedScores { feature: f.clone(), expected: k, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(RankingError::NonFinite(f.clone()));
            }
        }
        Ok(Self { scores })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, RankingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        Self::new(pairs.into_iter().map(|(f, v)| (f.into(), v)).collect())
    }

    pub fn scores(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.scores
    }

    pub fn k(&self) -> usize {
        self.scores.values().next().map_or(0, Vec::len)
    }

    fn transformed(&self, log: bool) -> BTreeMap<String, Vec<f64>> {
        if !log {
            return self.scores.clone();
        }
        self.scores
            .iter()
            .map(|(f, v)| (f.clone(), v.iter().map(|x| x.signum() * x.abs().ln_1p()).collect()))
            .collect()
    }
}

/// Integer importance ranks (1 = most important, ties allowed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankList {
    pub dataset: String,
    pub classifier: String,
    pub method: String,
    pub ranks: BTreeMap<String, u32>,
}

impl RankList {
    pub fn new(ranks: BTreeMap<String, u32>) -> Self {
        Self { dataset: String::new(), classifier: String::new(), method: String::new(), ranks }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        Self::new(pairs.into_iter().map(|(f, r)| (f.into(), r)).collect())
    }

    pub fn labeled(mut self, dataset: &str, classifier: &str, method: &str) -> Self {
        self.dataset = dataset.to_string();
        self.classifier = classifier.to_string();
        self.method = method.to_string();
        self
    }

    pub fn rank(&self, feature: &str) -> Option<u32> {
        self.ranks.get(feature).copied()
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.ranks.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Features sorted by rank, then name.
    pub fn ordered(&self) -> Vec<(&str, u32)> {
        let mut v: Vec<_> = self.ranks.iter().map(|(f, &r)| (f.as_str(), r)).collect();
        v.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Pooled-SD Cohen's d between two samples. Infinite when both samples are
/// constant but differ; zero when they are constant and equal.
pub fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = (stats::mean(a) - stats::mean(b)).abs();
    let pooled = (((na - 1.0) * stats::variance(a) + (nb - 1.0) * stats::variance(b)) / (na + nb - 2.0)).sqrt();
    if pooled > 0.0 {
        diff / pooled
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// The cut `c` (first group = `means[..c]`) maximizing the between-group sum
/// of squares of an ordered sequence of group means, each weighted by its
/// sample count. The first maximizing cut wins; sums of squares within a
/// relative 1e-10 count as equal so rounding cannot reorder ties.
pub fn best_cut(means: &[f64], weight: f64) -> Option<usize> {
    if means.len() < 2 {
        return None;
    }
    let total = means.iter().sum::<f64>() / means.len() as f64;
    let bss = |c: usize| {
        let (l, r) = means.split_at(c);
        let ml = l.iter().sum::<f64>() / l.len() as f64;
        let mr = r.iter().sum::<f64>() / r.len() as f64;
        weight * (l.len() as f64 * (ml - total).powi(2) + r.len() as f64 * (mr - total).powi(2))
    };
    let mut best = (1, bss(1));
    for c in 2..means.len() {
        let v = bss(c);
        if v > best.1 + 1e-10 * v.abs().max(best.1.abs()) {
            best = (c, v);
        }
    }
    Some(best.0)
}

/// Rank features by recursive Scott-Knott splitting, accepting a split only
/// when the two sides differ by Cohen's d of at least `d_threshold`.
pub fn sk_esd(dists: &ScoreDistributions, d_threshold: f64) -> Result<RankList, RankingError> {
    sk_esd_with(dists, d_threshold, false)
}

/// [`sk_esd`] with an optional signed `ln(1 + |x|)` transform of the scores.
pub fn sk_esd_with(dists: &ScoreDistributions, d_threshold: f64, log: bool) -> Result<RankList, RankingError> {
    if !(d_threshold > 0.0) {
        return Err(RankingError::BadThreshold(d_threshold));
    }
    let scores = dists.transformed(log);
    let mut order: Vec<(&String, f64)> = scores.iter().map(|(f, v)| (f, stats::mean(v))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let k = dists.k() as f64;

    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    let mut stack = vec![0..order.len()];
    while let Some(range) = stack.pop() {
        let means: Vec<f64> = order[range.clone()].iter().map(|o| o.1).collect();
        let split = best_cut(&means, k).and_then(|c| {
            let pool = |r: &[(&String, f64)]| r.iter().flat_map(|o| scores[o.0].iter().copied()).collect::<Vec<_>>();
            let left = pool(&order[range.start..range.start + c]);
            let right = pool(&order[range.start + c..range.end]);
            (cohens_d(&left, &right) >= d_threshold).then_some(range.start + c)
        });
        match split {
            Some(mid) => {
                stack.push(mid..range.end);
                stack.push(range.start..mid);
            }
            None => groups.push(range),
        }
    }
    groups.sort_by_key(|g| g.start);
    let mut ranks = BTreeMap::new();
    for (g, range) in groups.iter().enumerate() {
        for o in &order[range.clone()] {
            ranks.insert(o.0.clone(), g as u32 + 1);
        }
    }
    Ok(RankList::new(ranks))
}

/// Every feature ranked `k` or better; ties can make the set larger than `k`.
pub fn top_k_features(r: &RankList, k: u32) -> BTreeSet<String> {
    r.ranks.iter().filter(|(_, &rank)| rank <= k).map(|(f, _)| f.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn around(mean: f64, sd: f64, k: usize) -> Vec<f64> {
        // Symmetric pattern with exact mean and sample sd.
        let half: Vec<f64> = (0..k / 2).map(|_| 1.0).collect();
        let mut v: Vec<f64> = half.iter().map(|d| mean + d).chain(half.iter().map(|d| mean - d)).collect();
        let s = stats::variance(&v).sqrt();
        for x in &mut v {
            *x = mean + (*x - mean) * sd / s;
        }
        v
    }

    #[test]
    fn well_separated_pair() {
        let d = ScoreDistributions::from_pairs([("a", around(90.0, 1.0, 10)), ("b", around(10.0, 1.0, 10))]).unwrap();
        let r = sk_esd(&d, 0.2).unwrap();
        assert_eq!((r.rank("a"), r.rank("b")), (Some(1), Some(2)));
    }

    #[test]
    fn identical_constant_scores_share_rank() {
        let d = ScoreDistributions::from_pairs(["a", "b", "c"].map(|f| (f, vec![5.0; 4]))).unwrap();
        let r = sk_esd(&d, 0.2).unwrap();
        assert!(r.ranks.values().all(|&x| x == 1));
    }

    #[test]
    fn negligible_difference_merges() {
        let d = ScoreDistributions::from_pairs([
            ("a", around(50.0, 1.0, 10)),
            ("b", around(49.9, 1.0, 10)),
            ("c", around(10.0, 1.0, 10)),
        ])
        .unwrap();
        assert!((cohens_d(&around(50.0, 1.0, 10), &around(49.9, 1.0, 10)) - 0.1).abs() < 1e-9);
        let r = sk_esd(&d, 0.2).unwrap();
        assert_eq!(r.ordered(), vec![("a", 1), ("b", 1), ("c", 2)]);
    }

    #[test]
    fn zero_spread_unequal_means_split() {
        let d = ScoreDistributions::from_pairs([("a", vec![2.0; 3]), ("b", vec![1.0; 3])]).unwrap();
        assert_eq!(sk_esd(&d, 0.2).unwrap().rank("b"), Some(2));
    }

    #[test]
    fn tied_means_ordered_by_name() {
        let d = ScoreDistributions::from_pairs([("b", vec![1.0, 3.0]), ("a", vec![3.0, 1.0]), ("c", vec![0.0, 0.0])]).unwrap();
        let r = sk_esd(&d, 100.0).unwrap();
        assert_eq!(r.ordered()[0].0, "a");
    }

    #[test]
    fn input_validation() {
        assert_eq!(ScoreDistributions::new(BTreeMap::new()), Err(RankingError::Empty));
        assert!(matches!(ScoreDistributions::from_pairs([("a", vec![1.0])]), Err(RankingError::TooFewScores(1))));
        assert!(matches!(
            ScoreDistributions::from_pairs([("a", vec![1.0, 2.0]), ("b", vec![1.0])]),
            Err(RankingError::RaggedScores { .. })
        ));
        assert!(ScoreDistributions::from_pairs([("a", vec![1.0, f64::NAN])]).is_err());
        let d = ScoreDistributions::from_pairs([("a", vec![1.0, 2.0])]).unwrap();
        assert!(sk_esd(&d, 0.0).is_err());
    }

    #[test]
    fn top_k_examples() {
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let r = RankList::from_pairs([("a", 1), ("b", 2), ("c", 3), ("d", 4)]);
        assert_eq!(top_k_features(&r, 3), set(&["a", "b", "c"]));
        let r = RankList::from_pairs([("a", 1), ("b", 1), ("c", 2)]);
        assert_eq!(top_k_features(&r, 1), set(&["a", "b"]));
        assert_eq!(top_k_features(&RankList::from_pairs([("a", 1)]), 3), set(&["a"]));
    }

    #[test]
    fn log_flag_compresses_large_scores() {
        let d = ScoreDistributions::from_pairs([("a", vec![100.0, 101.0]), ("b", vec![-1.0, 0.0])]).unwrap();
        assert_eq!(sk_esd_with(&d, 0.2, true).unwrap().ordered(), vec![("a", 1), ("b", 2)]);
    }

    fn dists_strategy() -> impl Strategy<Value = ScoreDistributions> {
        (1usize..=6, 2usize..=5).prop_flat_map(|(p, k)| {
            prop::collection::vec(prop::collection::vec(0i32..20, k), p).prop_map(|cols| {
                ScoreDistributions::new(
                    cols.into_iter()
                        .enumerate()
                        .map(|(i, v)| (format!("f{i}"), v.into_iter().map(f64::from).collect()))
                        .collect(),
                )
                .unwrap()
            })
        })
    }

    fn bss_oracle(means: &[f64]) -> usize {
        let total = means.iter().sum::<f64>() / means.len() as f64;
        let mut best = (0, f64::NEG_INFINITY);
        for c in 1..means.len() {
            let m1 = means[..c].iter().sum::<f64>() / c as f64;
            let m2 = means[c..].iter().sum::<f64>() / (means.len() - c) as f64;
            let v = c as f64 * (m1 - total).powi(2) + (means.len() - c) as f64 * (m2 - total).powi(2);
            if v > best.1 + 1e-9 {
                best = (c, v);
            }
        }
        best.0
    }

    proptest! {
        #[test]
        fn contiguous_ranks_and_decreasing_means(d in dists_strategy()) {
            let r = sk_esd(&d, 0.2).unwrap();
            let max = *r.ranks.values().max().unwrap();
            let used: BTreeSet<u32> = r.ranks.values().copied().collect();
            prop_assert_eq!(used, (1..=max).collect::<BTreeSet<_>>());
            let group_mean = |g: u32| {
                let v: Vec<f64> = r.ranks.iter().filter(|(_, &x)| x == g).flat_map(|(f, _)| d.scores()[f].clone()).collect();
                stats::mean(&v)
            };
            for g in 1..max {
                prop_assert!(group_mean(g) > group_mean(g + 1));
            }
        }

        #[test]
        fn affine_invariance(d in dists_strategy(), a in 1u32..50, b in -100i32..100) {
            let (a, b) = (f64::from(a) / 7.0, f64::from(b));
            let t = ScoreDistributions::new(
                d.scores().iter().map(|(f, v)| (f.clone(), v.iter().map(|x| a * x + b).collect())).collect(),
            ).unwrap();
            prop_assert_eq!(sk_esd(&d, 0.2).unwrap(), sk_esd(&t, 0.2).unwrap());
        }

        #[test]
        fn lower_threshold_never_merges(d in dists_strategy(), lo in 1u32..10, extra in 1u32..30) {
            let lo = f64::from(lo) / 10.0;
            let hi = lo + f64::from(extra) / 10.0;
            let fine = sk_esd(&d, lo).unwrap();
            let coarse = sk_esd(&d, hi).unwrap();
            for (f, &rf) in &fine.ranks {
                for (g, &rg) in &fine.ranks {
                    if coarse.ranks[f] != coarse.ranks[g] {
                        prop_assert_ne!(rf, rg);
                    }
                }
            }
        }

        #[test]
        fn first_cut_matches_exhaustive(d in dists_strategy()) {
            let mut means: Vec<f64> = d.scores().values().map(|v| stats::mean(v)).collect();
            means.sort_by(|a, b| b.total_cmp(a));
            if means.len() >= 2 {
                let c = best_cut(&means, d.k() as f64).unwrap();
                let oracle = bss_oracle(&means);
                let bss = |c: usize| {
                    let t = means.iter().sum::<f64>() / means.len() as f64;
                    let m1 = means[..c].iter().sum::<f64>() / c as f64;
                    let m2 = means[c..].iter().sum::<f64>() / (means.len() - c) as f64;
                    c as f64 * (m1 - t).powi(2) + (means.len() - c) as f64 * (m2 - t).powi(2)
                };
                prop_assert!((bss(c) - bss(oracle)).abs() <= 1e-9);
            }
        }

        #[test]
        fn insertion_order_irrelevant(d in dists_strategy()) {
            let rev: BTreeMap<String, Vec<f64>> = d.scores().iter().rev().map(|(f, v)| (f.clone(), v.clone())).collect();
            prop_assert_eq!(sk_esd(&d, 0.2).unwrap(), sk_esd(&ScoreDistributions::new(rev).unwrap(), 0.2).unwrap());
        }
    }
}
