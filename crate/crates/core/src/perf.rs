//! Threshold-free performance measures and the classifier admission gate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::LearnerKind;
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("AUC needs both classes")]
    SingleClass,
    #[error("IFA needs at least one positive row")]
    NoPositive,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, PerfError> {
    if scores.len() != labels.len() {
        return Err(PerfError::Length { scores: scores.len(), labels: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PerfError::SingleClass);
    }
    let ranks = stats::midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// 1-based position of the first positive row after sorting by descending
/// score; ties keep the original row order.
pub fn ifa(scores: &[f64], labels: &[u8]) -> Result<usize, PerfError> {
    if scores.len() != labels.len() {
        return Err(PerfError::Length { scores: scores.len(), labels: labels.len() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.iter().position(|&i| labels[i] == 1).map(|p| p + 1).ok_or(PerfError::NoPositive)
}

/// Test-split performance of one classifier in one bootstrap iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub dataset: String,
    pub classifier: LearnerKind,
    pub iteration: usize,
    pub auc: f64,
    pub ifa: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFailure {
    Auc,
    Ifa,
    NoRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub median_auc: f64,
    pub median_ifa: f64,
    /// Empty when the classifier passes.
    pub failures: Vec<GateFailure>,
}

impl GateOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const GATE_MIN_AUC: f64 = 0.7;
pub const GATE_MAX_IFA: f64 = 1.0;

/// Pass iff median AUC > 0.7 and median IFA <= 1.
pub fn gate(records: &[PerfRecord]) -> GateOutcome {
    if records.is_empty() {
        return GateOutcome { median_auc: f64::NAN, median_ifa: f64::NAN, failures: vec![GateFailure::NoRecords] };
    }
    let aucs: Vec<f64> = records.iter().map(|r| r.auc).collect();
    let ifas: Vec<f64> = records.iter().map(|r| r.ifa as f64).collect();
    gate_medians(stats::median(&aucs), stats::median(&ifas))
}

pub fn gate_medians(median_auc: f64, median_ifa: f64) -> GateOutcome {
    let mut failures = Vec::new();
    if !(median_auc > GATE_MIN_AUC) {
        failures.push(GateFailure::Auc);
    }
    if !(median_ifa <= GATE_MAX_IFA) {
        failures.push(GateFailure::Ifa);
    }
    GateOutcome { median_auc, median_ifa, failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], l: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] == 1 && l[j] == 0 {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.6, 0.4, 0.1], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.3; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.2], &[1, 1]), Err(PerfError::SingleClass));
    }

    #[test]
    fn ifa_examples() {
        assert_eq!(ifa(&[0.9, 0.5], &[1, 0]).unwrap(), 1);
        assert_eq!(ifa(&[0.9, 0.8, 0.7, 0.1], &[0, 0, 1, 0]).unwrap(), 3);
        assert_eq!(ifa(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], &[0, 0, 0, 0, 0, 1]).unwrap(), 6);
        assert_eq!(ifa(&[0.5, 0.5, 0.5], &[0, 1, 1]).unwrap(), 2);
        assert_eq!(ifa(&[0.5], &[0]), Err(PerfError::NoPositive));
    }

    #[test]
    fn gate_examples() {
        assert!(gate_medians(0.85, 1.0).passed());
        assert_eq!(gate_medians(0.69, 1.0).failures, vec![GateFailure::Auc]);
        assert_eq!(gate_medians(0.7, 1.0).failures, vec![GateFailure::Auc]);
        assert_eq!(gate_medians(0.9, 2.0).failures, vec![GateFailure::Ifa]);
        assert!(!gate(&[]).passed());
    }

    #[test]
    fn gate_uses_median_of_records() {
        let rec = |auc, ifa| PerfRecord { dataset: "d".into(), classifier: LearnerKind::Cart, iteration: 0, auc, ifa, test_rows: 10 };
        let g = gate(&[rec(0.9, 1), rec(0.6, 3), rec(0.8, 1)]);
        assert_eq!((g.median_auc, g.median_ifa), (0.8, 1.0));
        assert!(g.passed());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_enumeration(rows in prop::collection::vec((0u8..6, 0u8..2), 2..=12)) {
            let s: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 5.0).collect();
            let l: Vec<u8> = rows.iter().map(|r| r.1).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            prop_assert!((auc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() <= 1e-12);
        }

        #[test]
        fn auc_complement(s in prop::collection::hash_set(0u32..1000, 2..=12), seed in any::<u64>()) {
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            let l: Vec<u8> = (0..s.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((auc(&s, &l).unwrap() + auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(rows in prop::collection::vec((0.0f64..1.0, 0u8..2), 2..=30)) {
            let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let l: Vec<u8> = rows.iter().map(|r| r.1).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            let t: Vec<f64> = s.iter().map(|v| v.powi(3) * 2.0 + 1.0).collect();
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
            prop_assert_eq!(ifa(&s, &l).unwrap(), ifa(&t, &l).unwrap());
        }
    }
}
