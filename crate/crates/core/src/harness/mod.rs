//! End-to-end orchestration: preprocessing, bootstrap, tuning, fitting,
//! gating, scoring, ranking and agreement reporting, plus the synthetic
//! interaction study and the CFS before/after study.

mod audit;
mod config;
mod studies;

use thiserror::Error;

pub use audit::{run_audit, run_rq3, AuditResult, ClassifierGate, ScoreRecord, SplitInfo, TunedSpec};
pub use config::{AuditConfig, InteractionConfig, MethodFamily, PermuteOn, Preprocessing};
pub use studies::{run_cfs_study, run_interaction_study, CfsStudy, DeltaRow, InteractionStudy, StudyRow};

use crate::agreement::AgreementError;
use crate::data::{DataError, RejectReason};
use crate::explain::ExplainError;
use crate::interactions::InteractionError;
use crate::learners::FitError;
use crate::ranking::RankingError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("dataset not admitted ({0:?}); set override_admission to analyse it anyway")]
    NotAdmitted(Vec<RejectReason>),
    #[error("feature selection left {0} feature(s); at least 2 are needed")]
    TooFewFeatures(usize),
    #[error("iteration {iteration}, {classifier}: {source}")]
    Fit {
        iteration: usize,
        classifier: String,
        #[source]
        source: FitError,
    },
    #[error("iteration {iteration}, {classifier}: {source}")]
    Explain {
        iteration: usize,
        classifier: String,
        #[source]
        source: ExplainError,
    },
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error("need at least 2 gate-passing classifiers, found {0}")]
    TooFewPassing(usize),
}
