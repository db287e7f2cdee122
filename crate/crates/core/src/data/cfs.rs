use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::stats;

/// Outcome of correlation-based feature selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfsSelection {
    /// Selected feature names in original column order.
    pub selected: Vec<String>,
    pub merit: f64,
    /// Nodes expanded by the best-first search.
    pub expansions: usize,
}

/// Precomputed absolute Pearson correlations.
struct Correlations {
    label: Vec<f64>,
    pairwise: Vec<Vec<f64>>,
}

impl Correlations {
    fn new(d: &Dataset) -> Self {
        let y = d.label_values();
        let cols: Vec<Vec<f64>> = (0..d.n_features()).map(|j| d.column(j)).collect();
        let label = cols.iter().map(|c| stats::pearson(c, &y).abs()).collect();
        let p = cols.len();
        let mut pairwise = vec![vec![1.0; p]; p];
        for i in 0..p {
            for j in i + 1..p {
                let r = stats::pearson(&cols[i], &cols[j]).abs();
                pairwise[i][j] = r;
                pairwise[j][i] = r;
            }
        }
        Self { label, pairwise }
    }

    fn merit(&self, subset: &[usize]) -> f64 {
        let k = subset.len();
        if k == 0 {
            return 0.0;
        }
        let rcf = subset.iter().map(|&f| self.label[f]).sum::<f64>() / k as f64;
        let mut rff = 0.0;
        if k > 1 {
            for (a, &i) in subset.iter().enumerate() {
                for &j in &subset[a + 1..] {
                    rff += self.pairwise[i][j];
                }
            }
            rff /= (k * (k - 1) / 2) as f64;
        }
        let kf = k as f64;
        kf * rcf / (kf + kf * (kf - 1.0) * rff).sqrt()
    }
}

/// CFS merit `k * mean|r_cf| / sqrt(k + k (k - 1) * mean|r_ff|)` of a subset of
/// column indices. The empty set has merit 0.
pub fn merit(d: &Dataset, subset: &[usize]) -> f64 {
    Correlations::new(d).merit(subset)
}

fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + 1e-12 * best.abs().max(1e-300)
}

/// Best-first forward search over feature subsets maximizing CFS merit.
///
/// Starts from the empty set, expands the highest-merit open subset by every
/// single-feature addition, and stops after `max_stale` consecutive expansions
/// that fail to improve the best merit seen. Zero-variance columns are never
/// candidates.
pub fn cfs_select(d: &Dataset, max_stale: usize) -> Result<(Dataset, CfsSelection), DataError> {
    if d.n_features() < 2 {
        return Err(DataError::TooFewFeatures { found: d.n_features(), required: 2 });
    }
    if max_stale == 0 {
        return Err(DataError::InvalidParameter("max_stale must be at least 1".into()));
    }
    let corr = Correlations::new(d);
    let candidates: Vec<usize> = (0..d.n_features())
        .filter(|&j| stats::variance(&d.column(j)) > 0.0)
        .collect();

    let mut open: Vec<(f64, Vec<usize>)> = vec![(0.0, Vec::new())];
    let mut seen: HashSet<Vec<usize>> = HashSet::from([Vec::new()]);
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    let mut stale = 0;
    let mut expansions = 0;

    while !open.is_empty() {
        // Highest merit first; ties go to the smaller, then lexicographically
        // smaller, subset.
        let pick = (0..open.len())
            .max_by(|&a, &b| {
                open[a]
                    .0
                    .total_cmp(&open[b].0)
                    .then_with(|| open[b].1.len().cmp(&open[a].1.len()))
                    .then_with(|| open[b].1.cmp(&open[a].1))
            })
            .expect("open list is non-empty");
        let (_, node) = open.swap_remove(pick);
        expansions += 1;

        let mut improved = false;
        for &f in &candidates {
            if node.contains(&f) {
                continue;
            }
            let mut child = node.clone();
            child.push(f);
            child.sort_unstable();
            if !seen.insert(child.clone()) {
                continue;
            }
            let m = corr.merit(&child);
            if improves(m, best.0) {
                best = (m, child.clone());
                improved = true;
            }
            open.push((m, child));
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= max_stale {
                break;
            }
        }
    }

    let selected = best.1;
    if selected.is_empty() {
        return Err(DataError::TooFewFeatures { found: 0, required: 1 });
    }
    let names = selected.iter().map(|&j| d.feature_names()[j].clone()).collect();
    Ok((d.select_features(&selected), CfsSelection { selected: names, merit: best.0, expansions }))
}
