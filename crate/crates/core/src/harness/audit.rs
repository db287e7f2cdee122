use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AuditConfig, HarnessError, MethodFamily, PermuteOn, Preprocessing};
use crate::agreement::AgreementReport;
use crate::data::{self, Admission, Dataset, DatasetMeta, RedundancyReport};
use crate::explain::{self, ShapMode};
use crate::interactions::{self, InteractionProfile};
use crate::learners::{self, FitError, ImportanceScores, LearnerKind, LearnerSpec, Model};
use crate::perf::{self, GateOutcome, PerfRecord};
use crate::ranking::{self, RankList, ScoreDistributions};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub iteration: usize,
    pub train_rows: usize,
    pub train_distinct: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedSpec {
    pub classifier: LearnerKind,
    /// `None` when tuned once for all iterations.
    pub iteration: Option<usize>,
    pub spec: LearnerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub classifier: LearnerKind,
    pub family: MethodFamily,
    pub scores: ImportanceScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierGate {
    pub classifier: LearnerKind,
    pub outcome: GateOutcome,
}

/// Everything an audit produced, keyed so it can be rebuilt from the
/// dataset and the config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub dataset: String,
    pub config: AuditConfig,
    pub meta: DatasetMeta,
    pub admission: Admission,
    pub redundancy: RedundancyReport,
    /// Features kept by CFS, when it ran.
    pub cfs_selected: Option<Vec<String>>,
    /// Features entering the models.
    pub features: Vec<String>,
    pub splits: Vec<SplitInfo>,
    pub tuned: Vec<TunedSpec>,
    pub perf: Vec<PerfRecord>,
    pub gates: Vec<ClassifierGate>,
    pub scores: Vec<ScoreRecord>,
    /// One list per (gate-passing classifier, method family).
    pub rank_lists: Vec<RankList>,
    /// Classifier-specific vs each model-agnostic method, per classifier.
    pub ca_vs_cs: Vec<AgreementReport>,
    /// Permutation vs Shapley, per classifier.
    pub ca_vs_ca: Vec<AgreementReport>,
    /// Classifier-specific lists compared pairwise across classifiers.
    pub cs_vs_cs_pairs: Vec<AgreementReport>,
    /// Classifier-specific lists compared as one group.
    pub cs_vs_cs_group: Option<AgreementReport>,
    pub interactions: Option<InteractionProfile>,
}

impl AuditResult {
    pub fn gate(&self, kind: LearnerKind) -> Option<&GateOutcome> {
        self.gates.iter().find(|g| g.classifier == kind).map(|g| &g.outcome)
    }

    pub fn passing(&self) -> Vec<LearnerKind> {
        self.gates.iter().filter(|g| g.outcome.passed()).map(|g| g.classifier).collect()
    }

    pub fn rank_list(&self, kind: LearnerKind, family: MethodFamily) -> Option<&RankList> {
        let method = method_name(kind, family);
        self.rank_lists.iter().find(|r| r.classifier == kind.as_str() && r.method == method)
    }

    pub fn perf_for(&self, kind: LearnerKind) -> Vec<&PerfRecord> {
        self.perf.iter().filter(|r| r.classifier == kind).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit result serializes")
    }
}

/// Rank-list method label: the CS method name for `Cs`, otherwise the family.
pub fn method_name(kind: LearnerKind, family: MethodFamily) -> &'static str {
    match family {
        MethodFamily::Cs => kind.cs_method().as_str(),
        other => other.as_str(),
    }
}

struct Prepared {
    data: Dataset,
    redundancy: RedundancyReport,
    cfs_selected: Option<Vec<String>>,
}

fn preprocess(d: &Dataset, cfg: &AuditConfig) -> Result<Prepared, HarnessError> {
    let (filtered, redundancy) = data::spearman_redundancy_filter(d, cfg.rho_threshold, cfg.vif_threshold)?;
    let (data, cfs_selected) = match cfg.preprocessing {
        Preprocessing::AutospearmanOnly => (filtered, None),
        Preprocessing::AutospearmanThenCfs => {
            let (selected, sel) = data::cfs_select(&filtered, cfg.cfs_max_stale)?;
            if selected.n_features() < 2 {
                return Err(HarnessError::TooFewFeatures(selected.n_features()));
            }
            (selected, Some(sel.selected))
        }
    };
    Ok(Prepared { data, redundancy, cfs_selected })
}

/// Per-iteration output for one classifier.
struct IterationOutput {
    tuned: Option<TunedSpec>,
    perf: PerfRecord,
    scores: Vec<ScoreRecord>,
}

fn tune_seed(master: u64, kind: LearnerKind, iteration: Option<usize>) -> u64 {
    let mut tags = vec![seed::tag("tune"), seed::tag(kind.as_str())];
    if let Some(i) = iteration {
        tags.push(i as u64);
    }
    seed::derive(master, &tags)
}

fn run_iteration(
    d: &Dataset,
    split: &data::BootstrapSplit,
    kind: LearnerKind,
    fixed: Option<&LearnerSpec>,
    cfg: &AuditConfig,
) -> Result<IterationOutput, HarnessError> {
    let i = split.iteration;
    let fit_err = |source: FitError| HarnessError::Fit { iteration: i, classifier: kind.to_string(), source };
    let explain_err = |source: explain::ExplainError| HarnessError::Explain { iteration: i, classifier: kind.to_string(), source };
    let train = d.select_rows(&split.train);
    let test = d.select_rows(&split.test);
    let (spec, tuned) = match fixed {
        Some(s) => (*s, None),
        None => {
            let s = learners::tune_random_search(kind, &train, cfg.tune_budget, cfg.tune_folds, tune_seed(cfg.seed, kind, Some(i)))
                .map_err(fit_err)?;
            (s, Some(TunedSpec { classifier: kind, iteration: Some(i), spec: s }))
        }
    };
    let model = learners::fit(&spec, &train).map_err(fit_err)?;
    let test_pred = model.predict_proba(test.features()).map_err(|e| explain_err(e.into()))?;
    let perf = PerfRecord {
        dataset: d.name().to_string(),
        classifier: kind,
        iteration: i,
        auc: perf::auc(&test_pred, test.labels()).map_err(|e| explain_err(e.into()))?,
        ifa: perf::ifa(&test_pred, test.labels()).map_err(|e| explain_err(e.into()))?,
        test_rows: test.n_rows(),
    };
    let stream = |purpose: &str| seed::derive(cfg.seed, &[seed::tag(purpose), seed::tag(kind.as_str()), i as u64]);
    let mut scores = Vec::new();
    for &family in &cfg.methods {
        let mut s = match family {
            MethodFamily::Cs => learners::cs_importance(&model, &train).map_err(fit_err)?,
            MethodFamily::Permutation => {
                let on = if cfg.permute_on == PermuteOn::Train { &train } else { &test };
                explain::permutation_importance(&model, on, stream("permutation")).map_err(explain_err)?
            }
            MethodFamily::Shap => shap_scores(&model, &train, cfg, stream("shap")).map_err(explain_err)?,
        };
        s.iteration = i;
        scores.push(ScoreRecord { classifier: kind, family, scores: s });
    }
    Ok(IterationOutput { tuned, perf, scores })
}

fn shap_scores<M: Model + ?Sized>(model: &M, train: &Dataset, cfg: &AuditConfig, stream: u64) -> Result<ImportanceScores, explain::ExplainError> {
    let n = train.n_rows();
    let bg_idx = explain::sample_background(n, cfg.shap_background, seed::derive(stream, &[0]));
    let row_idx = match cfg.shap_rows {
        Some(r) if r < n => explain::sample_background(n, r, seed::derive(stream, &[1])),
        _ => (0..n).collect(),
    };
    let x = train.features();
    let background = x.select(ndarray::Axis(0), &bg_idx);
    let rows = x.select(ndarray::Axis(0), &row_idx);
    let mode = if train.n_features() <= cfg.shap_exact_max_features {
        ShapMode::Exact
    } else {
        ShapMode::Sampled { n_coalitions: cfg.shap_coalitions.max(train.n_features() + 2), seed: seed::derive(stream, &[2]) }
    };
    let e = explain::shap_values(model, rows.view(), background.view(), mode)?;
    explain::shap_importance(&e, train.feature_names())
}

/// Run the full audit of one dataset.
pub fn run_audit(d: &Dataset, cfg: &AuditConfig) -> Result<AuditResult, HarnessError> {
    cfg.validate()?;
    d.check_analyzable()?;
    let admission = data::admission_check(d);
    if let Admission::Rejected(reasons) = &admission {
        if !cfg.override_admission {
            return Err(HarnessError::NotAdmitted(reasons.clone()));
        }
    }
    let prepared = preprocess(d, cfg)?;
    let pd = &prepared.data;
    let splits = data::bootstrap_splits_for(pd.labels(), cfg.bootstrap_k, seed::derive(cfg.seed, &[seed::tag("bootstrap")]))?;

    let mut tuned = Vec::new();
    let mut fixed: BTreeMap<LearnerKind, LearnerSpec> = BTreeMap::new();
    if cfg.tune_once {
        for &kind in &cfg.classifiers {
            let spec = learners::tune_random_search(kind, pd, cfg.tune_budget, cfg.tune_folds, tune_seed(cfg.seed, kind, None))
                .map_err(|source| HarnessError::Fit { iteration: 0, classifier: kind.to_string(), source })?;
            tuned.push(TunedSpec { classifier: kind, iteration: None, spec });
            fixed.insert(kind, spec);
        }
    }

    let jobs: Vec<(usize, LearnerKind)> =
        (0..splits.len()).flat_map(|i| cfg.classifiers.iter().map(move |&k| (i, k))).collect();
    let outputs: Vec<IterationOutput> = jobs
        .par_iter()
        .map(|&(i, kind)| run_iteration(pd, &splits[i], kind, fixed.get(&kind), cfg))
        .collect::<Result<_, _>>()?;

    let mut perf = Vec::new();
    let mut scores = Vec::new();
    for out in outputs {
        tuned.extend(out.tuned);
        perf.push(out.perf);
        scores.extend(out.scores);
    }

    let gates: Vec<ClassifierGate> = cfg
        .classifiers
        .iter()
        .map(|&k| {
            let recs: Vec<PerfRecord> = perf.iter().filter(|r| r.classifier == k).cloned().collect();
            ClassifierGate { classifier: k, outcome: perf::gate(&recs) }
        })
        .collect();
    let passing: Vec<LearnerKind> = gates.iter().filter(|g| g.outcome.passed()).map(|g| g.classifier).collect();

    let mut rank_lists = Vec::new();
    for &kind in &passing {
        for &family in &cfg.methods {
            let mut per_feature: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for rec in scores.iter().filter(|r| r.classifier == kind && r.family == family) {
                for (f, v) in rec.scores.features.iter().zip(&rec.scores.values) {
                    per_feature.entry(f.clone()).or_default().push(*v);
                }
            }
            let dists = ScoreDistributions::new(per_feature)?;
            let ranks = ranking::sk_esd_with(&dists, cfg.sk_esd_d, cfg.sk_esd_log)?;
            rank_lists.push(ranks.labeled(pd.name(), kind.as_str(), method_name(kind, family)));
        }
    }

    let find = |kind: LearnerKind, family: MethodFamily| {
        let m = method_name(kind, family);
        rank_lists.iter().find(|r| r.classifier == kind.as_str() && r.method == m)
    };
    let mut ca_vs_cs = Vec::new();
    let mut ca_vs_ca = Vec::new();
    for &kind in &passing {
        if let Some(cs) = find(kind, MethodFamily::Cs) {
            for ca in [MethodFamily::Permutation, MethodFamily::Shap] {
                if let Some(other) = find(kind, ca) {
                    ca_vs_cs.push(AgreementReport::pair(cs, other)?);
                }
            }
        }
        if let (Some(p), Some(s)) = (find(kind, MethodFamily::Permutation), find(kind, MethodFamily::Shap)) {
            ca_vs_ca.push(AgreementReport::pair(p, s)?);
        }
    }
    let cs_lists: Vec<RankList> = passing.iter().filter_map(|&k| find(k, MethodFamily::Cs).cloned()).collect();
    let mut cs_vs_cs_pairs = Vec::new();
    for a in 0..cs_lists.len() {
        for b in a + 1..cs_lists.len() {
            cs_vs_cs_pairs.push(AgreementReport::pair(&cs_lists[a], &cs_lists[b])?);
        }
    }
    let cs_vs_cs_group = if cs_lists.len() >= 2 { Some(run_rq3(&cs_lists)?) } else { None };

    let interactions = if cfg.interactions.enabled {
        Some(interactions::surrogate_profile(
            pd,
            cfg.interactions.repeats,
            cfg.interactions.max_rows,
            seed::derive(cfg.seed, &[seed::tag("interactions")]),
        )?)
    } else {
        None
    };

    let split_info = splits
        .iter()
        .map(|s| SplitInfo {
            iteration: s.iteration,
            train_rows: s.train.len(),
            train_distinct: s.train.iter().collect::<std::collections::BTreeSet<_>>().len(),
            test_rows: s.test.len(),
        })
        .collect();

    Ok(AuditResult {
        dataset: d.name().to_string(),
        config: cfg.clone(),
        meta: d.meta(),
        admission,
        redundancy: prepared.redundancy,
        cfs_selected: prepared.cfs_selected,
        features: pd.feature_names().to_vec(),
        splits: split_info,
        tuned,
        perf,
        gates,
        scores,
        rank_lists,
        ca_vs_cs,
        ca_vs_ca,
        cs_vs_cs_pairs,
        cs_vs_cs_group,
        interactions,
    })
}

/// Kendall W and group top-1/top-3 overlap across classifier-specific rank
/// lists of one dataset.
pub fn run_rq3(lists: &[RankList]) -> Result<AgreementReport, HarnessError> {
    if lists.len() < 2 {
        return Err(HarnessError::TooFewPassing(lists.len()));
    }
    let scope = lists.iter().map(|l| l.classifier.as_str()).collect::<Vec<_>>().join("+");
    Ok(AgreementReport::group(lists, &scope, "cs")?)
}
