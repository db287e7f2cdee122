//! Rank agreement statistics: Kendall tau-b, Kendall W, top-k overlap, and
//! their interpretation bands.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::{top_k_features, RankList};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("rank lists cover different features (only in one: {0:?})")]
    FeatureMismatch(Vec<String>),
    #[error("need at least {required} rank lists, got {found}")]
    TooFewLists { required: usize, found: usize },
    #[error("need at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("{value} is outside the range of {metric}")]
    OutOfRange { metric: Metric, value: f64 },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tau,
    W,
    Top1,
    Top3,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Tau => "tau",
            Metric::W => "w",
            Metric::Top1 => "top1",
            Metric::Top3 => "top3",
        }
    }

    pub fn top_k(k: u32) -> Option<Metric> {
        match k {
            1 => Some(Metric::Top1),
            3 => Some(Metric::Top3),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau" => Ok(Metric::Tau),
            "w" => Ok(Metric::W),
            "top1" => Ok(Metric::Top1),
            "top3" => Ok(Metric::Top3),
            _ => Err(format!("unknown metric `{s}`")),
        }
    }
}

fn same_features(lists: &[&RankList]) -> Result<(), AgreementError> {
    let first: BTreeSet<&str> = lists[0].features().collect();
    for l in &lists[1..] {
        let other: BTreeSet<&str> = l.features().collect();
        if other != first {
            let diff = first.symmetric_difference(&other).map(|s| s.to_string()).collect();
            return Err(AgreementError::FeatureMismatch(diff));
        }
    }
    Ok(())
}

/// Pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub tied_a: u64,
    pub tied_b: u64,
}

pub fn pair_counts(a: &RankList, b: &RankList) -> Result<PairCounts, AgreementError> {
    same_features(&[a, b])?;
    let pairs: Vec<(u32, u32)> = a.ranks.iter().map(|(f, &ra)| (ra, b.ranks[f])).collect();
    let mut c = PairCounts::default();
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let da = pairs[i].0.cmp(&pairs[j].0);
            let db = pairs[i].1.cmp(&pairs[j].1);
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => c.tied_a += 1,
                (_, Equal) => c.tied_b += 1,
                _ if da == db => c.concordant += 1,
                _ => c.discordant += 1,
            }
        }
    }
    Ok(c)
}

/// Tau-b. Zero when either list is entirely tied.
pub fn kendall_tau(a: &RankList, b: &RankList) -> Result<f64, AgreementError> {
    let c = pair_counts(a, b)?;
    let (cd, dd) = (c.concordant as f64, c.discordant as f64);
    let denom = ((cd + dd + c.tied_a as f64) * (cd + dd + c.tied_b as f64)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((cd - dd) / denom).clamp(-1.0, 1.0))
}

/// Tie-corrected Kendall W over `m >= 2` lists. Ranks are converted to
/// midranks within each list first, so tied groups occupy their average
/// position. Zero when every list is entirely tied.
pub fn kendall_w(lists: &[RankList]) -> Result<f64, AgreementError> {
    if lists.len() < 2 {
        return Err(AgreementError::TooFewLists { required: 2, found: lists.len() });
    }
    let refs: Vec<&RankList> = lists.iter().collect();
    same_features(&refs)?;
    let n = lists[0].len();
    if n < 2 {
        return Err(AgreementError::TooFewFeatures(n));
    }
    let m = lists.len() as f64;
    let mut sums = vec![0.0; n];
    let mut ties = 0.0;
    for l in lists {
        let raw: Vec<f64> = l.ranks.values().map(|&r| f64::from(r)).collect();
        for (s, r) in sums.iter_mut().zip(stats::midranks(&raw)) {
            *s += r;
        }
        let mut sorted = raw.clone();
        sorted.sort_by(f64::total_cmp);
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            ties += t * t * t - t;
        }
    }
    let mean = sums.iter().sum::<f64>() / n as f64;
    let s: f64 = sums.iter().map(|r| (r - mean).powi(2)).sum();
    let nf = n as f64;
    let denom = m * m * (nf * nf * nf - nf) - m * ties;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

/// |intersection| / |union| of the lists' top-k feature sets.
pub fn top_k_overlap(lists: &[RankList], k: u32) -> Result<f64, AgreementError> {
    if k == 0 {
        return Err(AgreementError::ZeroK);
    }
    if lists.len() < 2 {
        return Err(AgreementError::TooFewLists { required: 2, found: lists.len() });
    }
    let sets: Vec<BTreeSet<String>> = lists.iter().map(|l| top_k_features(l, k)).collect();
    let union: BTreeSet<&String> = sets.iter().flatten().collect();
    if union.is_empty() {
        return Ok(1.0);
    }
    let inter = union.iter().filter(|f| sets.iter().all(|s| s.contains(**f))).count();
    Ok(inter as f64 / union.len() as f64)
}

/// Interpretation band for a metric value. Tau and W use `|value|` with
/// weak <= 0.3 < moderate <= 0.6 < strong; top-3 uses negligible <= 0.25 <
/// small <= 0.5 < medium <= 0.75 < large; top-1 uses low <= 0.5 < high.
pub fn interpret(metric: Metric, value: f64) -> Result<&'static str, AgreementError> {
    let range = match metric {
        Metric::Tau => -1.0..=1.0,
        _ => 0.0..=1.0,
    };
    if !range.contains(&value) {
        return Err(AgreementError::OutOfRange { metric, value });
    }
    let v = value.abs();
    Ok(match metric {
        Metric::Tau | Metric::W => {
            if v <= 0.3 {
                "weak"
            } else if v <= 0.6 {
                "moderate"
            } else {
                "strong"
            }
        }
        Metric::Top3 => {
            if v <= 0.25 {
                "negligible"
            } else if v <= 0.5 {
                "small"
            } else if v <= 0.75 {
                "medium"
            } else {
                "large"
            }
        }
        Metric::Top1 => {
            if v <= 0.5 {
                "low"
            } else {
                "high"
            }
        }
    })
}

/// One agreement row: a metric between two lists (pair mode) or across a
/// group of lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub dataset: String,
    /// Classifier name, or a group identifier for cross-classifier rows.
    pub scope: String,
    pub a: String,
    /// Second method, or the group description.
    pub b: String,
    pub metric: Metric,
    pub value: f64,
    pub label: String,
    /// Number of lists compared.
    pub m: usize,
    /// Set when tau fell back to 0 because a list was entirely tied.
    pub degenerate: bool,
}

/// Agreement metrics for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub dataset: String,
    pub scope: String,
    pub a: String,
    pub b: String,
    pub m: usize,
    pub tau: Option<f64>,
    pub w: Option<f64>,
    pub top1_overlap: f64,
    pub top3_overlap: f64,
    pub degenerate_tau: bool,
}

impl AgreementReport {
    /// Pair mode: tau plus top-1/top-3 overlap.
    pub fn pair(a: &RankList, b: &RankList) -> Result<Self, AgreementError> {
        let tau = kendall_tau(a, b)?;
        let all_tied = |l: &RankList| l.ranks.values().collect::<BTreeSet<_>>().len() <= 1;
        let lists = [a.clone(), b.clone()];
        Ok(Self {
            dataset: a.dataset.clone(),
            scope: if a.classifier == b.classifier { a.classifier.clone() } else { format!("{}|{}", a.classifier, b.classifier) },
            a: label_of(a),
            b: label_of(b),
            m: 2,
            tau: Some(tau),
            w: None,
            top1_overlap: top_k_overlap(&lists, 1)?,
            top3_overlap: top_k_overlap(&lists, 3)?,
            degenerate_tau: all_tied(a) || all_tied(b),
        })
    }

    /// Group mode: Kendall W plus group top-1/top-3 overlap.
    pub fn group(lists: &[RankList], scope: &str, description: &str) -> Result<Self, AgreementError> {
        let w = kendall_w(lists)?;
        Ok(Self {
            dataset: lists[0].dataset.clone(),
            scope: scope.to_string(),
            a: description.to_string(),
            b: lists.iter().map(label_of).collect::<Vec<_>>().join("+"),
            m: lists.len(),
            tau: None,
            w: Some(w),
            top1_overlap: top_k_overlap(lists, 1)?,
            top3_overlap: top_k_overlap(lists, 3)?,
            degenerate_tau: false,
        })
    }

    pub fn overlap(&self, k: u32) -> Option<f64> {
        match k {
            1 => Some(self.top1_overlap),
            3 => Some(self.top3_overlap),
            _ => None,
        }
    }

    /// Flatten into labelled metric rows.
    pub fn rows(&self) -> Vec<AgreementRow> {
        let mut out = Vec::new();
        let mut push = |metric: Metric, value: f64, degenerate: bool| {
            out.push(AgreementRow {
                dataset: self.dataset.clone(),
                scope: self.scope.clone(),
                a: self.a.clone(),
                b: self.b.clone(),
                metric,
                value,
                label: interpret(metric, value).unwrap_or("undefined").to_string(),
                m: self.m,
                degenerate,
            });
        };
        if let Some(t) = self.tau {
            push(Metric::Tau, t, self.degenerate_tau);
        }
        if let Some(w) = self.w {
            push(Metric::W, w, false);
        }
        push(Metric::Top1, self.top1_overlap, false);
        push(Metric::Top3, self.top3_overlap, false);
        out
    }
}

fn label_of(l: &RankList) -> String {
    if l.method.is_empty() {
        l.classifier.clone()
    } else if l.classifier.is_empty() {
        l.method.clone()
    } else {
        format!("{}:{}", l.classifier, l.method)
    }
}
