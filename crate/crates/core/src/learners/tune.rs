//! Random hyperparameter search scored by stratified cross-validated AUC.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{fit, FitError, Hyperparameters, LearnerKind, LearnerSpec, Model};
use crate::data::Dataset;
use crate::{perf, seed, stats};

/// Result of a search: the winner plus every candidate's CV AUC in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: LearnerSpec,
    pub candidates: Vec<Hyperparameters>,
    pub cv_auc: Vec<f64>,
}

/// Draw one candidate uniformly from the kind's search grid.
///
/// logistic: `lambda = 10^U(-4, 1)`, `alpha` from {0, .25, .5, .75, 1};
/// cart: `cp` log-uniform on [1e-4, 0.2]; forest: 100 trees, `mtry` from
/// 1..=p; gbt: `nrounds` 50..=300, `max_depth` 1..=6, `eta` U[0.01, 0.3].
pub fn draw_candidate(kind: LearnerKind, p: usize, rng: &mut ChaCha8Rng) -> Hyperparameters {
    match kind {
        LearnerKind::Logistic => {
            let lambda = 10f64.powf(rng.random_range(-4.0..=1.0));
            let alpha = [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)];
            Hyperparameters::Logistic { lambda, alpha }
        }
        LearnerKind::Cart => {
            let cp = (rng.random_range(1e-4f64.ln()..=0.2f64.ln())).exp();
            Hyperparameters::Cart { cp }
        }
        LearnerKind::RandomForest => Hyperparameters::RandomForest { mtry: rng.random_range(1..=p.max(1)), n_trees: 100 },
        LearnerKind::Gbt => Hyperparameters::Gbt {
            nrounds: rng.random_range(50..=300),
            max_depth: rng.random_range(1..=6),
            eta: rng.random_range(0.01..=0.3),
        },
    }
}

/// Assign each row to one of `folds` folds, stratified by label. The fold
/// count drops to the minority class size when that is smaller.
pub fn stratified_folds(labels: &[u8], folds: usize, rng: &mut ChaCha8Rng) -> (usize, Vec<usize>) {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let k = folds.min(pos.len()).min(neg.len()).max(1);
    let mut assign = vec![0; labels.len()];
    let mut offset = 0;
    for mut class in [pos, neg] {
        class.shuffle(rng);
        for (i, &row) in class.iter().enumerate() {
            assign[row] = (i + offset) % k;
        }
        offset += class.len();
    }
    (k, assign)
}

/// Mean AUC over folds for one candidate. Folds whose training part cannot be
/// fit are skipped; NaN when no fold could be scored.
pub fn cv_auc(params: Hyperparameters, learner_seed: u64, train: &Dataset, k: usize, assign: &[usize]) -> f64 {
    let mut scores = Vec::with_capacity(k);
    for fold in 0..k {
        let fit_rows: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] != fold).collect();
        let held: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == fold).collect();
        let fit_set = train.select_rows(&fit_rows);
        let held_set = train.select_rows(&held);
        let Ok(model) = fit(&LearnerSpec::new(params, learner_seed), &fit_set) else { continue };
        let Ok(pred) = model.predict_proba(held_set.features()) else { continue };
        if let Ok(a) = perf::auc(&pred, held_set.labels()) {
            scores.push(a);
        }
    }
    if scores.is_empty() {
        f64::NAN
    } else {
        stats::mean(&scores)
    }
}

/// Score an explicit candidate list and return the first candidate with the
/// highest CV AUC.
pub fn tune_over(candidates: &[Hyperparameters], train: &Dataset, folds: usize, seed: u64) -> Result<TuneOutcome, FitError> {
    assert!(!candidates.is_empty(), "candidate list must be non-empty");
    for c in candidates {
        c.validate(train.n_features())?;
    }
    let learner_seed = seed::derive(seed, &[seed::tag("learner")]);
    if candidates.len() == 1 {
        return Ok(TuneOutcome {
            best: LearnerSpec::new(candidates[0], learner_seed),
            candidates: candidates.to_vec(),
            cv_auc: vec![f64::NAN],
        });
    }
    let mut rng = seed::rng_for(seed, &[seed::tag("folds")]);
    let (k, assign) = stratified_folds(train.labels(), folds.max(2), &mut rng);
    let scores: Vec<f64> = candidates.iter().map(|&c| cv_auc(c, learner_seed, train, k, &assign)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    Ok(TuneOutcome { best: LearnerSpec::new(candidates[best], learner_seed), candidates: candidates.to_vec(), cv_auc: scores })
}

/// Draw `budget` candidates from the kind's grid and keep the one with the
/// best mean CV AUC (first drawn wins ties). A budget of 1 skips scoring.
pub fn tune_random_search(
    kind: LearnerKind,
    train: &Dataset,
    budget: usize,
    folds: usize,
    seed: u64,
) -> Result<LearnerSpec, FitError> {
    if budget == 0 {
        return Err(FitError::InvalidHyperparameter("tuning budget must be at least 1".into()));
    }
    if folds < 2 {
        return Err(FitError::InvalidHyperparameter("tuning needs at least 2 folds".into()));
    }
    let mut rng = seed::rng_for(seed, &[seed::tag("candidates")]);
    let candidates: Vec<_> = (0..budget).map(|_| draw_candidate(kind, train.n_features(), &mut rng)).collect();
    Ok(tune_over(&candidates, train, folds, seed)?.best)
}
