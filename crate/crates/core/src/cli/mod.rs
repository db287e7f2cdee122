//! Command-line front end: `audit`, `simulate`, `interactions`, `compare`
//! and `cfs-study`.

pub mod report;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::agreement::{AgreementError, AgreementReport};
use crate::data::{self, DataError, Dataset};
use crate::harness::{self, AuditConfig, AuditResult, HarnessError, MethodFamily, Preprocessing};
use crate::interactions::{self, InteractionError, SyntheticSpec};
use crate::learners::LearnerKind;
use crate::ranking::RankList;
use report::Source;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "FIAGREE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io(..) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Usage(m),
            HarnessError::Data(_) | HarnessError::NotAdmitted(_) | HarnessError::TooFewFeatures(_) => CliError::Data(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<InteractionError> for CliError {
    fn from(e: InteractionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AgreementError> for CliError {
    fn from(e: AgreementError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fiagree", version, about = "Agreement between feature-importance methods on binary classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full audit on a CSV dataset and write the report bundle.
    Audit(AuditArgs),
    /// Write a synthetic ground-truth dataset as CSV plus a metadata sidecar.
    Simulate(SimulateArgs),
    /// Friedman H profile of a random-forest surrogate fit to a dataset.
    Interactions(InteractionArgs),
    /// Agreement between two previously written rank files.
    Compare(CompareArgs),
    /// Audit with and without CFS and report the agreement deltas.
    CfsStudy(AuditArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(required_unless_present = "print_config")]
    pub data: Option<PathBuf>,
    /// Label column name.
    #[arg(long, required_unless_present = "print_config")]
    pub label: Option<String>,
    /// Label value marking the defective class.
    #[arg(long, default_value = "1")]
    pub positive: String,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// TOML file with AuditConfig keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated subset of logistic,cart,random_forest,gbt.
    #[arg(long, value_delimiter = ',')]
    pub classifiers: Option<Vec<LearnerKind>>,
    /// Comma-separated subset of cs,permutation,shap.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodFamily>>,
    /// Bootstrap iterations.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Random-search candidates per tuning.
    #[arg(long)]
    pub tune_budget: Option<usize>,
    /// Tune once on the whole dataset instead of in every iteration.
    #[arg(long)]
    pub tune_once: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add CFS after the correlation filter.
    #[arg(long, value_enum)]
    pub cfs: Option<Switch>,
    /// Analyse datasets that fail the EPV / defective-ratio filters.
    #[arg(long)]
    pub override_admission: bool,
    /// Skip the Friedman H profile.
    #[arg(long)]
    pub no_interactions: bool,
    /// Output directory.
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Add the pairwise product terms of x1, x2, x3 to the signal.
    #[arg(long, overrides_with = "no_interactions")]
    pub interactions: bool,
    #[arg(long)]
    pub no_interactions: bool,
    #[arg(long, default_value_t = 1500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long, default_value = "synthetic.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InteractionArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value_t = interactions::H_REPEATS)]
    pub repeats: usize,
    /// Rows per H evaluation.
    #[arg(long, default_value_t = interactions::H_SUBSAMPLE)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for interactions.csv.
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First rank file.
    pub a: PathBuf,
    /// Second rank file.
    pub b: PathBuf,
    /// Overlap depths to report.
    #[arg(long = "top-k", value_delimiter = ',', default_value = "1,3")]
    pub top_k: Vec<u32>,
    /// `classifier:method` list to take from the first file when it holds several.
    #[arg(long)]
    pub a_list: Option<String>,
    /// `classifier:method` list to take from the second file when it holds several.
    #[arg(long)]
    pub b_list: Option<String>,
    /// Also write the rows to this CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run the command line in `args` (program name first) and return its exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Audit(a) => cmd_audit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Interactions(a) => cmd_interactions(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::CfsStudy(a) => cmd_cfs_study(&a),
    }
}

/// Effective configuration: defaults, then the config file, then flags.
pub fn build_config(a: &AuditArgs) -> Result<AuditConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => AuditConfig::default(),
    };
    if let Some(c) = &a.classifiers {
        cfg.classifiers = c.clone();
    }
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if let Some(k) = a.bootstrap {
        cfg.bootstrap_k = k;
    }
    if let Some(b) = a.tune_budget {
        cfg.tune_budget = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    match a.cfs {
        Some(Switch::On) => cfg.preprocessing = Preprocessing::AutospearmanThenCfs,
        Some(Switch::Off) => cfg.preprocessing = Preprocessing::AutospearmanOnly,
        None => {}
    }
    cfg.tune_once |= a.tune_once;
    cfg.override_admission |= a.override_admission;
    if a.no_interactions {
        cfg.interactions.enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_config(cfg: &AuditConfig) -> Result<(), CliError> {
    print!("{}", cfg.to_toml().map_err(CliError::from)?);
    Ok(())
}

fn load(input: &DataArgs, command: &str) -> Result<(Dataset, Source), CliError> {
    let path = input.data.as_ref().ok_or_else(|| CliError::Usage("missing data path".into()))?;
    let label = input.label.as_ref().ok_or_else(|| CliError::Usage("missing --label".into()))?;
    let d = data::load_csv(path, label, &input.positive)?;
    let src = Source {
        command: command.to_string(),
        path: Some(path.clone()),
        sha256: Some(report::sha256_file(path)?),
        label: Some(label.clone()),
        positive: Some(input.positive.clone()),
    };
    Ok((d, src))
}

fn cmd_audit(a: &AuditArgs) -> Result<(), CliError> {
    let cfg = build_config(a)?;
    if a.input.print_config {
        return print_config(&cfg);
    }
    let (d, src) = load(&a.input, "audit")?;
    let r = harness::run_audit(&d, &cfg)?;
    report::write_bundle(&a.out, &r, &src)?;
    print_summary(&r);
    println!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_cfs_study(a: &AuditArgs) -> Result<(), CliError> {
    let cfg = build_config(a)?;
    if a.input.print_config {
        return print_config(&cfg);
    }
    let (d, src) = load(&a.input, "cfs-study")?;
    let study = harness::run_cfs_study(&d, &cfg)?;
    report::write_bundle(&a.out.join("before"), &study.before, &src)?;
    println!("== before CFS");
    print_summary(&study.before);
    match (&study.after, &study.skipped) {
        (Some(after), _) => {
            report::write_bundle(&a.out.join("after"), after, &src)?;
            println!("== after CFS");
            print_summary(after);
        }
        (None, reason) => println!("warning: CFS arm skipped: {}", reason.as_deref().unwrap_or("no reason recorded")),
    }
    let bytes = report::to_csv(&study.deltas, &["comparison", "metric", "before", "after", "delta"])?;
    report::write_atomic(&a.out.join("deltas.csv"), &bytes)?;
    if !study.deltas.is_empty() {
        println!("{:<10} {:<6} {:>8} {:>8} {:>8}", "comparison", "metric", "before", "after", "delta");
        for d in &study.deltas {
            println!("{:<10} {:<6} {:>8.3} {:>8.3} {:>+8.3}", d.comparison, d.metric, d.before, d.after, d.delta);
        }
    }
    println!("report written to {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SimulationMeta<'a> {
    spec: &'a SyntheticSpec,
    seed: u64,
    rows: usize,
    label_column: &'static str,
    positive_label: &'static str,
    ground_truth_top3: [&'static str; 3],
    signal_terms: Vec<String>,
    interaction_terms: Vec<&'static str>,
    data_sha256: String,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    if a.n < data::MIN_ROWS * 2 {
        return Err(CliError::Usage(format!("--n must be at least {}", data::MIN_ROWS * 2)));
    }
    let spec = SyntheticSpec::new(a.n, a.interactions && !a.no_interactions, a.seed);
    let d = interactions::generate_synthetic(&spec);
    let bytes = dataset_csv(&d, SyntheticSpec::LABEL)?;
    report::write_atomic(&a.out, &bytes)?;
    let meta = SimulationMeta {
        spec: &spec,
        seed: a.seed,
        rows: d.n_rows(),
        label_column: SyntheticSpec::LABEL,
        positive_label: "1",
        ground_truth_top3: spec.ground_truth_top3(),
        signal_terms: SyntheticSpec::FEATURES[..5]
            .iter()
            .zip(&spec.signal_weights)
            .map(|(f, w)| format!("{w}*{f}"))
            .collect(),
        interaction_terms: spec.interaction_terms(),
        data_sha256: report::sha256_hex(&bytes),
    };
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| CliError::Internal(e.to_string()))?;
    let meta_path = sidecar_path(&a.out);
    report::write_atomic(&meta_path, &json)?;
    println!(
        "wrote {} rows ({} defective) to {} and metadata to {}",
        d.n_rows(),
        d.n_positive(),
        a.out.display(),
        meta_path.display()
    );
    Ok(())
}

/// `dir/name.csv` -> `dir/name.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    csv.with_file_name(format!("{stem}.meta.json"))
}

/// Dataset as CSV with the label as the last column.
pub fn dataset_csv(d: &Dataset, label: &str) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    let mut header: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    header.push(label);
    w.write_record(&header).map_err(internal)?;
    for (row, y) in d.features().outer_iter().zip(d.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(internal)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_interactions(a: &InteractionArgs) -> Result<(), CliError> {
    if a.input.print_config {
        println!("repeats = {}\nmax_rows = {}\nseed = {}", a.repeats, a.max_rows, a.seed);
        return Ok(());
    }
    if a.repeats == 0 || a.max_rows < 2 {
        return Err(CliError::Usage("--repeats must be positive and --max-rows at least 2".into()));
    }
    let (d, _) = load(&a.input, "interactions")?;
    d.check_analyzable()?;
    let p = interactions::surrogate_profile(&d, a.repeats, a.max_rows, a.seed)?;
    let rows = report::interaction_rows(d.name(), &p);
    let bytes = report::to_csv(&rows, &report::INTERACTION_HEADER)?;
    let path = a.out.join(report::INTERACTIONS_CSV);
    report::write_atomic(&path, &bytes)?;
    println!("{:<16} {:>8}  flags", "feature", "H");
    for r in &rows {
        let flag = if r.flag_05 { ">=0.5" } else if r.flag_03 { ">=0.3" } else { "" };
        println!("{:<16} {:>8.4}  {flag}", r.feature, r.median_h);
    }
    println!("features with H >= 0.3: {}; H >= 0.5: {}", p.count_low(), p.count_high());
    println!("written to {}", path.display());
    Ok(())
}

fn read_lists(path: &Path) -> Result<Vec<RankList>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let rows: Vec<report::RankRow> =
        report::from_csv(&bytes).map_err(|e| CliError::Data(format!("{}: not a rank file: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no rank rows", path.display())));
    }
    Ok(report::lists_from_rows(&rows))
}

fn pick(lists: Vec<RankList>, selector: Option<&str>, path: &Path) -> Result<RankList, CliError> {
    let names = |ls: &[RankList]| ls.iter().map(|l| format!("{}:{}", l.classifier, l.method)).collect::<Vec<_>>().join(", ");
    match selector {
        Some(sel) => {
            let (c, m) = sel
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("list selector `{sel}` must look like classifier:method")))?;
            let found = lists.iter().position(|l| l.classifier == c && l.method == m);
            match found {
                Some(i) => Ok(lists.into_iter().nth(i).expect("index from position")),
                None => Err(CliError::Data(format!("{}: no list `{sel}` (available: {})", path.display(), names(&lists)))),
            }
        }
        None if lists.len() == 1 => Ok(lists.into_iter().next().expect("one list")),
        None => Err(CliError::Usage(format!(
            "{} holds {} lists; choose one with a classifier:method selector (available: {})",
            path.display(),
            lists.len(),
            names(&lists)
        ))),
    }
}

/// Agreement rows for two rank lists over the same features.
pub fn compare_lists(a: &RankList, b: &RankList, top_k: &[u32]) -> Result<Vec<report::AgreementCsvRow>, CliError> {
    let fa: BTreeSet<&str> = a.features().collect();
    let fb: BTreeSet<&str> = b.features().collect();
    if fa != fb {
        let diff: Vec<&str> = fa.symmetric_difference(&fb).copied().collect();
        return Err(CliError::Data(format!("rank lists cover different features; only in one: {}", diff.join(", "))));
    }
    if top_k.is_empty() || top_k.contains(&0) {
        return Err(CliError::Usage("--top-k values must be positive".into()));
    }
    let rep = AgreementReport::pair(a, b)?;
    let mut rows = report::agreement_rows("compare", std::slice::from_ref(&rep));
    rows.retain(|r| r.metric == "tau");
    let pair = [a.clone(), b.clone()];
    for &k in top_k {
        let v = crate::agreement::top_k_overlap(&pair, k)?;
        let label = crate::agreement::Metric::top_k(k)
            .and_then(|m| crate::agreement::interpret(m, v).ok())
            .unwrap_or(crate::agreement::interpret(crate::agreement::Metric::Top3, v)?);
        rows.push(report::AgreementCsvRow {
            dataset: rep.dataset.clone(),
            comparison: "compare".into(),
            scope: rep.scope.clone(),
            a: rep.a.clone(),
            b: rep.b.clone(),
            metric: format!("top{k}"),
            value: v,
            label: label.to_string(),
            m: 2,
            degenerate: false,
        });
    }
    Ok(rows)
}

fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let la = pick(read_lists(&a.a)?, a.a_list.as_deref(), &a.a)?;
    let lb = pick(read_lists(&a.b)?, a.b_list.as_deref(), &a.b)?;
    let rows = compare_lists(&la, &lb, &a.top_k)?;
    println!("{} vs {}", rows[0].a, rows[0].b);
    for r in &rows {
        println!("  {:<6} {:>7.4}  {}{}", r.metric, r.value, r.label, if r.degenerate { " (degenerate)" } else { "" });
    }
    if let Some(out) = &a.out {
        report::write_atomic(out, &report::to_csv(&rows, &report::AGREEMENT_HEADER)?)?;
    }
    Ok(())
}

/// Gate outcomes and agreement rows as a plain-text table.
pub fn summary_table(r: &AuditResult) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "dataset {} ({} rows, {} features used)", r.dataset, r.meta.n_rows, r.features.len());
    for g in &r.gates {
        let o = &g.outcome;
        let status = if o.passed() { "pass" } else { "FAIL" };
        let _ = writeln!(s, "  {:<14} median AUC {:.3}  median IFA {:>4}  {status}", g.classifier.as_str(), o.median_auc, o.median_ifa);
    }
    let rows = report::audit_agreement_rows(r);
    if rows.is_empty() {
        let _ = writeln!(s, "no agreement rows");
        return s;
    }
    let lists: Vec<String> = rows
        .iter()
        .map(|row| if row.comparison == "cs_vs_cs_group" { row.a.clone() } else { format!("{} vs {}", row.a, row.b) })
        .collect();
    let w = lists.iter().map(String::len).max().unwrap_or(5).max(5);
    let _ = writeln!(s, "{:<15} {:<w$} {:<6} {:>7}  label", "comparison", "lists", "metric", "value");
    for (row, l) in rows.iter().zip(&lists) {
        let _ = writeln!(s, "{:<15} {:<w$} {:<6} {:>7.3}  {}", row.comparison, l, row.metric, row.value, row.label);
    }
    s
}

fn print_summary(r: &AuditResult) {
    print!("{}", summary_table(r));
    if r.passing().is_empty() {
        eprintln!("warning: every classifier failed the performance gate; no rank lists were produced");
    }
}
