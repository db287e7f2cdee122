//! Report bundle rows, CSV encoding and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::agreement::AgreementReport;
use crate::harness::AuditResult;
use crate::interactions::InteractionProfile;
use crate::ranking::RankList;

pub const RANKS_CSV: &str = "ranks.csv";
pub const AGREEMENT_CSV: &str = "agreement.csv";
pub const PERF_CSV: &str = "perf.csv";
pub const INTERACTIONS_CSV: &str = "interactions.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub dataset: String,
    pub classifier: String,
    pub method: String,
    pub feature: String,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCsvRow {
    pub dataset: String,
    pub comparison: String,
    pub scope: String,
    pub a: String,
    pub b: String,
    pub metric: String,
    pub value: f64,
    pub label: String,
    pub m: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRow {
    pub dataset: String,
    pub classifier: String,
    pub iteration: usize,
    pub auc: f64,
    pub ifa: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub dataset: String,
    pub feature: String,
    pub median_h: f64,
    pub flag_03: bool,
    pub flag_05: bool,
}

pub fn rank_rows(lists: &[RankList]) -> Vec<RankRow> {
    lists
        .iter()
        .flat_map(|l| {
            l.ordered().into_iter().map(move |(f, r)| RankRow {
                dataset: l.dataset.clone(),
                classifier: l.classifier.clone(),
                method: l.method.clone(),
                feature: f.to_string(),
                rank: r,
            })
        })
        .collect()
}

pub fn agreement_rows(comparison: &str, reports: &[AgreementReport]) -> Vec<AgreementCsvRow> {
    reports
        .iter()
        .flat_map(|r| r.rows())
        .map(|r| AgreementCsvRow {
            dataset: r.dataset,
            comparison: comparison.to_string(),
            scope: r.scope,
            a: r.a,
            b: r.b,
            metric: r.metric.to_string(),
            value: r.value,
            label: r.label,
            m: r.m,
            degenerate: r.degenerate,
        })
        .collect()
}

pub fn audit_agreement_rows(r: &AuditResult) -> Vec<AgreementCsvRow> {
    let mut rows = agreement_rows("ca_vs_cs", &r.ca_vs_cs);
    rows.extend(agreement_rows("ca_vs_ca", &r.ca_vs_ca));
    rows.extend(agreement_rows("cs_vs_cs", &r.cs_vs_cs_pairs));
    if let Some(g) = &r.cs_vs_cs_group {
        rows.extend(agreement_rows("cs_vs_cs_group", std::slice::from_ref(g)));
    }
    rows
}

pub fn interaction_rows(dataset: &str, p: &InteractionProfile) -> Vec<InteractionRow> {
    p.features
        .iter()
        .enumerate()
        .map(|(j, f)| InteractionRow {
            dataset: dataset.to_string(),
            feature: f.clone(),
            median_h: p.median_h[j],
            flag_03: p.flag_low[j],
            flag_05: p.flag_high[j],
        })
        .collect()
}

/// Serialize rows to CSV bytes. The header is written even for no rows.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(internal)?;
    for r in rows {
        w.serialize(r).map_err(internal)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

pub fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

pub const RANK_HEADER: [&str; 5] = ["dataset", "classifier", "method", "feature", "rank"];
pub const AGREEMENT_HEADER: [&str; 10] = ["dataset", "comparison", "scope", "a", "b", "metric", "value", "label", "m", "degenerate"];
pub const PERF_HEADER: [&str; 6] = ["dataset", "classifier", "iteration", "auc", "ifa", "test_rows"];
pub const INTERACTION_HEADER: [&str; 5] = ["dataset", "feature", "median_h", "flag_03", "flag_05"];

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Write `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    tmp.persist(path).map_err(|e| CliError::Io(path.to_path_buf(), e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance of one audit bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub dataset: String,
    pub data_path: Option<PathBuf>,
    pub data_sha256: Option<String>,
    pub label_column: Option<String>,
    pub positive_label: Option<String>,
    pub config: crate::harness::AuditConfig,
    pub admission: crate::data::Admission,
    pub meta: crate::data::DatasetMeta,
    pub removed_correlated: Vec<String>,
    pub removed_inflated: Vec<String>,
    pub cfs_selected: Option<Vec<String>>,
    pub features: Vec<String>,
    pub tuned: Vec<crate::harness::TunedSpec>,
    pub gates: Vec<crate::harness::ClassifierGate>,
    pub passing: Vec<String>,
    /// File name to SHA-256 of every other file in the bundle.
    pub files: BTreeMap<String, String>,
}

/// Input provenance recorded in a manifest.
#[derive(Debug, Clone, Default)]
pub struct Source {
    pub command: String,
    pub path: Option<PathBuf>,
    pub sha256: Option<String>,
    pub label: Option<String>,
    pub positive: Option<String>,
}

/// Write the five bundle files for `r` into `dir`.
pub fn write_bundle(dir: &Path, r: &AuditResult, src: &Source) -> Result<Manifest, CliError> {
    let perf: Vec<PerfRow> = r
        .perf
        .iter()
        .map(|p| PerfRow {
            dataset: p.dataset.clone(),
            classifier: p.classifier.to_string(),
            iteration: p.iteration,
            auc: p.auc,
            ifa: p.ifa,
            test_rows: p.test_rows,
        })
        .collect();
    let inter = r.interactions.as_ref().map(|p| interaction_rows(&r.dataset, p)).unwrap_or_default();
    let files = [
        (RANKS_CSV, to_csv(&rank_rows(&r.rank_lists), &RANK_HEADER)?),
        (AGREEMENT_CSV, to_csv(&audit_agreement_rows(r), &AGREEMENT_HEADER)?),
        (PERF_CSV, to_csv(&perf, &PERF_HEADER)?),
        (INTERACTIONS_CSV, to_csv(&inter, &INTERACTION_HEADER)?),
    ];
    let mut hashes = BTreeMap::new();
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
        hashes.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: src.command.clone(),
        dataset: r.dataset.clone(),
        data_path: src.path.clone(),
        data_sha256: src.sha256.clone(),
        label_column: src.label.clone(),
        positive_label: src.positive.clone(),
        config: r.config.clone(),
        admission: r.admission.clone(),
        meta: r.meta.clone(),
        removed_correlated: r.redundancy.correlated.clone(),
        removed_inflated: r.redundancy.inflated.clone(),
        cfs_selected: r.cfs_selected.clone(),
        features: r.features.clone(),
        tuned: r.tuned.clone(),
        gates: r.gates.clone(),
        passing: r.passing().iter().map(|k| k.to_string()).collect(),
        files: hashes,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(internal)?;
    write_atomic(&dir.join(MANIFEST_JSON), &json)?;
    Ok(manifest)
}

/// Group rank rows into lists keyed by (dataset, classifier, method).
pub fn lists_from_rows(rows: &[RankRow]) -> Vec<RankList> {
    let mut grouped: BTreeMap<(String, String, String), BTreeMap<String, u32>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.dataset.clone(), r.classifier.clone(), r.method.clone()))
            .or_default()
            .insert(r.feature.clone(), r.rank);
    }
    grouped
        .into_iter()
        .map(|((d, c, m), ranks)| RankList::new(ranks).labeled(&d, &c, &m))
        .collect()
}
