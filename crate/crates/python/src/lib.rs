//! Python bindings. Rank lists cross the boundary as `{feature: rank}`
//! dicts; audit results as JSON strings.

#[pyo3::pymodule]
mod fiagree_py {
    use std::collections::{BTreeMap, HashMap};

    use fiagree::agreement::{self, Metric};
    use fiagree::harness::{self, AuditConfig};
    use fiagree::interactions::{self, SyntheticSpec};
    use fiagree::ranking::{self, RankList, ScoreDistributions};
    use fiagree::{data, perf};
    use pyo3::exceptions::{PyIOError, PyValueError};
    use pyo3::prelude::*;

    fn value_err(e: impl std::fmt::Display) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn list(ranks: HashMap<String, u32>) -> RankList {
        RankList::new(ranks.into_iter().collect())
    }

    fn metric(name: &str) -> PyResult<Metric> {
        match name {
            "tau" => Ok(Metric::Tau),
            "w" => Ok(Metric::W),
            "top1" => Ok(Metric::Top1),
            "top3" => Ok(Metric::Top3),
            other => Err(PyValueError::new_err(format!("unknown metric `{other}` (expected tau, w, top1, top3)"))),
        }
    }

    /// Kendall tau-b between two rank dicts over the same features.
    #[pyfunction]
    fn kendall_tau(a: HashMap<String, u32>, b: HashMap<String, u32>) -> PyResult<f64> {
        agreement::kendall_tau(&list(a), &list(b)).map_err(value_err)
    }

    /// Tie-corrected Kendall W across two or more rank dicts.
    #[pyfunction]
    fn kendall_w(lists: Vec<HashMap<String, u32>>) -> PyResult<f64> {
        let lists: Vec<RankList> = lists.into_iter().map(list).collect();
        agreement::kendall_w(&lists).map_err(value_err)
    }

    /// |intersection| / |union| of the top-k feature sets.
    #[pyfunction]
    fn top_k_overlap(lists: Vec<HashMap<String, u32>>, k: u32) -> PyResult<f64> {
        let lists: Vec<RankList> = lists.into_iter().map(list).collect();
        agreement::top_k_overlap(&lists, k).map_err(value_err)
    }

    /// Interpretation label of a metric value.
    #[pyfunction]
    fn interpret(metric_name: &str, value: f64) -> PyResult<&'static str> {
        agreement::interpret(metric(metric_name)?, value).map_err(value_err)
    }

    #[pyfunction]
    fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
        perf::auc(&scores, &labels).map_err(value_err)
    }

    /// Rows inspected before the first defective one, best score first.
    #[pyfunction]
    fn ifa(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<usize> {
        perf::ifa(&scores, &labels).map_err(value_err)
    }

    /// Scott-Knott ESD ranks of per-feature score samples.
    #[pyfunction]
    #[pyo3(signature = (scores, d_threshold = 0.2))]
    fn sk_esd(scores: HashMap<String, Vec<f64>>, d_threshold: f64) -> PyResult<BTreeMap<String, u32>> {
        let dists = ScoreDistributions::new(scores.into_iter().collect()).map_err(value_err)?;
        Ok(ranking::sk_esd(&dists, d_threshold).map_err(value_err)?.ranks)
    }

    /// Synthetic ground-truth data as `(rows, labels, feature_names)`.
    #[pyfunction]
    #[pyo3(signature = (n_rows = 1500, with_interactions = false, seed = 0))]
    fn generate_synthetic(n_rows: usize, with_interactions: bool, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>, Vec<String>) {
        let d = interactions::generate_synthetic(&SyntheticSpec::new(n_rows, with_interactions, seed));
        let rows = d.features().outer_iter().map(|r| r.to_vec()).collect();
        (rows, d.labels().to_vec(), d.feature_names().to_vec())
    }

    /// Default audit configuration as TOML.
    #[pyfunction]
    fn default_config() -> PyResult<String> {
        AuditConfig::default().to_toml().map_err(value_err)
    }

    /// Run an audit on a CSV file and return the result as JSON. The
    /// optional TOML text overrides the default configuration.
    #[pyfunction]
    #[pyo3(signature = (path, label, positive = "1", config_toml = None))]
    fn run_audit_csv(py: Python<'_>, path: &str, label: &str, positive: &str, config_toml: Option<&str>) -> PyResult<String> {
        let cfg = match config_toml {
            Some(t) => AuditConfig::from_toml(t).map_err(value_err)?,
            None => AuditConfig::default(),
        };
        let d = data::load_csv(path, label, positive).map_err(|e| match e {
            data::DataError::Io { .. } => PyIOError::new_err(e.to_string()),
            other => value_err(other),
        })?;
        let result = py.detach(|| harness::run_audit(&d, &cfg)).map_err(value_err)?;
        Ok(result.to_json())
    }
}
