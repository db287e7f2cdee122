use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::learners::LearnerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodFamily {
    /// The classifier's own importance score.
    Cs,
    Permutation,
    Shap,
}

impl MethodFamily {
    pub const ALL: [MethodFamily; 3] = [MethodFamily::Cs, MethodFamily::Permutation, MethodFamily::Shap];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodFamily::Cs => "cs",
            MethodFamily::Permutation => "permutation",
            MethodFamily::Shap => "shap",
        }
    }
}

impl std::str::FromStr for MethodFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cs" => Ok(MethodFamily::Cs),
            "permutation" => Ok(MethodFamily::Permutation),
            "shap" => Ok(MethodFamily::Shap),
            _ => Err(format!("unknown method `{s}` (expected cs, permutation, shap)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    #[default]
    AutospearmanOnly,
    AutospearmanThenCfs,
}

/// Which split permutation importance is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermuteOn {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    pub enabled: bool,
    pub repeats: usize,
    pub max_rows: usize,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self { enabled: true, repeats: crate::interactions::H_REPEATS, max_rows: crate::interactions::H_SUBSAMPLE }
    }
}

/// Everything that determines an audit besides the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub classifiers: Vec<LearnerKind>,
    pub methods: Vec<MethodFamily>,
    pub bootstrap_k: usize,
    pub tune_budget: usize,
    pub tune_folds: usize,
    /// Tune once on the full preprocessed data instead of inside every
    /// bootstrap iteration.
    pub tune_once: bool,
    pub seed: u64,
    pub preprocessing: Preprocessing,
    pub top_k: Vec<u32>,
    pub rho_threshold: f64,
    pub vif_threshold: f64,
    pub cfs_max_stale: usize,
    /// Background rows for Shapley values, drawn from the train split.
    pub shap_background: usize,
    /// Train rows whose Shapley values are summed; all rows when absent.
    pub shap_rows: Option<usize>,
    /// Largest feature count explained exactly; above it, sampled mode.
    pub shap_exact_max_features: usize,
    pub shap_coalitions: usize,
    pub sk_esd_d: f64,
    /// Apply a signed log transform to scores before SK-ESD.
    pub sk_esd_log: bool,
    pub permute_on: PermuteOn,
    pub override_admission: bool,
    pub interactions: InteractionConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            classifiers: LearnerKind::ALL.to_vec(),
            methods: MethodFamily::ALL.to_vec(),
            bootstrap_k: 100,
            tune_budget: 10,
            tune_folds: 3,
            tune_once: false,
            seed: 0,
            preprocessing: Preprocessing::AutospearmanOnly,
            top_k: vec![1, 3],
            rho_threshold: 0.7,
            vif_threshold: 5.0,
            cfs_max_stale: 5,
            shap_background: 64,
            shap_rows: None,
            shap_exact_max_features: 12,
            shap_coalitions: 2048,
            sk_esd_d: 0.2,
            sk_esd_log: false,
            permute_on: PermuteOn::Train,
            override_admission: false,
            interactions: InteractionConfig::default(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.classifiers.is_empty() {
            return bad("classifiers must not be empty");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.classifiers.iter().collect::<BTreeSet<_>>().len() != self.classifiers.len() {
            return bad("classifiers contain duplicates");
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return bad("methods contain duplicates");
        }
        if self.bootstrap_k < 2 {
            return bad("bootstrap_k must be at least 2");
        }
        if self.tune_budget == 0 {
            return bad("tune_budget must be at least 1");
        }
        if self.tune_folds < 2 {
            return bad("tune_folds must be at least 2");
        }
        if self.top_k.is_empty() || self.top_k.contains(&0) {
            return bad("top_k must hold positive values");
        }
        if self.cfs_max_stale == 0 {
            return bad("cfs_max_stale must be at least 1");
        }
        if self.shap_background == 0 || self.shap_rows == Some(0) {
            return bad("shap_background and shap_rows must be positive");
        }
        if self.shap_exact_max_features > crate::explain::MAX_EXACT_FEATURES {
            return bad("shap_exact_max_features exceeds the exact-mode limit");
        }
        if !(self.sk_esd_d > 0.0) {
            return bad("sk_esd_d must be positive");
        }
        if self.interactions.enabled && (self.interactions.repeats == 0 || self.interactions.max_rows < 2) {
            return bad("interaction repeats must be positive and max_rows at least 2");
        }
        Ok(())
    }

    pub fn has(&self, m: MethodFamily) -> bool {
        self.methods.contains(&m)
    }

    /// Fails only for seeds above `i64::MAX`, which TOML cannot represent.
    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
