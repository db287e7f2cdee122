//! Agreement analysis between feature-importance methods for binary tabular
//! classifiers.
//!
//! The crate covers the whole measurement pipeline: CSV ingestion and
//! preprocessing ([`data`]), four built-in learners with their model-specific
//! importance scores ([`learners`]), model-agnostic permutation and Shapley
//! importance ([`explain`]), Friedman H interaction detection and synthetic
//! ground-truth generators ([`interactions`]), Scott-Knott ESD ranking
//! ([`ranking`]), rank agreement statistics ([`agreement`]), performance gating
//! ([`perf`]), and the orchestration layer ([`harness`]) that the [`cli`]
//! front end drives.

pub mod agreement;
pub mod cli;
pub mod data;
pub mod explain;
pub mod harness;
pub mod interactions;
pub mod learners;
pub mod perf;
pub mod ranking;
pub mod seed;
pub mod stats;

pub use agreement::{interpret, kendall_tau, kendall_w, top_k_overlap, AgreementReport, Metric};
pub use data::{admission_check, bootstrap_splits, cfs_select, load_csv, spearman_redundancy_filter};
pub use data::{Admission, BootstrapSplit, DataError, Dataset, DatasetMeta};
pub use explain::{permutation_importance, shap_importance, shap_values, ShapExplanation, ShapMode};
pub use harness::{run_audit, AuditConfig, AuditResult};
pub use interactions::{friedman_h, generate_synthetic, interaction_profile, partial_dependence};
pub use interactions::{InteractionProfile, SyntheticSpec};
pub use learners::{cs_importance, fit, tune_random_search, FittedClassifier, LearnerKind, LearnerSpec};
pub use learners::{ImportanceMethod, ImportanceScores, Model};
pub use perf::{auc, gate, ifa, GateOutcome, PerfRecord};
pub use ranking::{sk_esd, top_k_features, RankList, ScoreDistributions};
