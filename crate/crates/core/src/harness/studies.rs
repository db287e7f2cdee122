use serde::{Deserialize, Serialize};

use super::{run_audit, AuditConfig, AuditResult, HarnessError, Preprocessing};
use crate::agreement::AgreementReport;
use crate::data::Dataset;
use crate::interactions::{generate_synthetic, SyntheticSpec};
use crate::stats;

/// One overlap figure of the synthetic comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub variant: String,
    /// `ca_vs_cs`, `ca_vs_ca`, `cs_vs_cs` or `cs_vs_cs_group`.
    pub comparison: String,
    pub scope: String,
    pub a: String,
    pub b: String,
    pub top1: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionStudy {
    pub seed: u64,
    pub additive: AuditResult,
    pub interacting: AuditResult,
    pub rows: Vec<StudyRow>,
}

fn study_rows(variant: &str, r: &AuditResult) -> Vec<StudyRow> {
    let row = |comparison: &str, a: &AgreementReport| StudyRow {
        variant: variant.to_string(),
        comparison: comparison.to_string(),
        scope: a.scope.clone(),
        a: a.a.clone(),
        b: a.b.clone(),
        top1: a.top1_overlap,
        top3: a.top3_overlap,
    };
    let mut rows: Vec<StudyRow> = r.ca_vs_cs.iter().map(|a| row("ca_vs_cs", a)).collect();
    rows.extend(r.ca_vs_ca.iter().map(|a| row("ca_vs_ca", a)));
    rows.extend(r.cs_vs_cs_pairs.iter().map(|a| row("cs_vs_cs", a)));
    rows.extend(r.cs_vs_cs_group.iter().map(|a| row("cs_vs_cs_group", a)));
    rows
}

/// Audit the additive and the interacting synthetic datasets drawn from `seed`
/// with `n_rows` rows each and tabulate their overlaps.
pub fn run_interaction_study(seed: u64, n_rows: usize, cfg: &AuditConfig) -> Result<InteractionStudy, HarnessError> {
    let cfg = AuditConfig { seed, override_admission: true, ..cfg.clone() };
    let additive = run_audit(&generate_synthetic(&SyntheticSpec::new(n_rows, false, seed)), &cfg)?;
    let interacting = run_audit(&generate_synthetic(&SyntheticSpec::new(n_rows, true, seed)), &cfg)?;
    let mut rows = study_rows("additive", &additive);
    rows.extend(study_rows("interactions", &interacting));
    Ok(InteractionStudy { seed, additive, interacting, rows })
}

/// Before/after change of one agreement summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub comparison: String,
    pub metric: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfsStudy {
    pub before: AuditResult,
    pub after: Option<AuditResult>,
    /// Why the CFS arm was skipped, if it was.
    pub skipped: Option<String>,
    pub deltas: Vec<DeltaRow>,
}

fn median_overlap(reports: &[AgreementReport], k: u32) -> f64 {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.overlap(k)).collect();
    stats::median(&v)
}

fn median_tau(reports: &[AgreementReport]) -> f64 {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.tau).collect();
    stats::median(&v)
}

impl CfsStudy {
    /// Median CA-vs-CS top-k overlap before and after CFS.
    pub fn ca_vs_cs_overlap(&self, k: u32) -> (f64, Option<f64>) {
        (median_overlap(&self.before.ca_vs_cs, k), self.after.as_ref().map(|a| median_overlap(&a.ca_vs_cs, k)))
    }
}

/// Audit `d` with correlation filtering only and again with CFS added, and
/// report the change in median agreement. A CFS arm that leaves fewer than
/// two features is recorded as skipped.
pub fn run_cfs_study(d: &Dataset, cfg: &AuditConfig) -> Result<CfsStudy, HarnessError> {
    let before = run_audit(d, &AuditConfig { preprocessing: Preprocessing::AutospearmanOnly, ..cfg.clone() })?;
    let after = match run_audit(d, &AuditConfig { preprocessing: Preprocessing::AutospearmanThenCfs, ..cfg.clone() }) {
        Ok(r) => r,
        Err(HarnessError::TooFewFeatures(n)) => {
            return Ok(CfsStudy {
                before,
                after: None,
                skipped: Some(format!("CFS kept {n} feature(s)")),
                deltas: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut deltas = Vec::new();
    for (comparison, b, a) in [
        ("ca_vs_cs", &before.ca_vs_cs, &after.ca_vs_cs),
        ("ca_vs_ca", &before.ca_vs_ca, &after.ca_vs_ca),
        ("cs_vs_cs", &before.cs_vs_cs_pairs, &after.cs_vs_cs_pairs),
    ] {
        for (metric, fb, fa) in [
            ("top1", median_overlap(b, 1), median_overlap(a, 1)),
            ("top3", median_overlap(b, 3), median_overlap(a, 3)),
            ("tau", median_tau(b), median_tau(a)),
        ] {
            deltas.push(DeltaRow { comparison: comparison.into(), metric: metric.into(), before: fb, after: fa, delta: fa - fb });
        }
    }
    Ok(CfsStudy { before, after: Some(after), skipped: None, deltas })
}
