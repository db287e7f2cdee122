use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fiagree(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiagree"))
        .args(args)
        .current_dir(cwd)
        .env("FIAGREE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const FAST: &[&str] = &[
    "--classifiers",
    "logistic,cart",
    "--bootstrap",
    "2",
    "--tune-budget",
    "1",
    "--tune-once",
    "--override-admission",
    "--no-interactions",
    "--seed",
    "3",
];

fn simulate(dir: &Path, name: &str, n: &str) {
    ok(&fiagree(&["simulate", "--n", n, "--seed", "5", "--out", name], dir));
}

#[test]
fn simulate_is_deterministic_and_writes_sidecar() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "a.csv", "200");
    simulate(dir.path(), "b.csv", "200");
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["ground_truth_top3"], serde_json::json!(["x1", "x2", "x3"]));
}

#[test]
fn simulate_rejects_tiny_n() {
    let dir = TempDir::new().unwrap();
    let out = fiagree(&["simulate", "--n", "5", "--out", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn audit_writes_bundle_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "d.csv", "120");
    for out in ["r1", "r2"] {
        let mut args = vec!["audit", "d.csv", "--label", "y", "--out", out];
        args.extend_from_slice(FAST);
        ok(&fiagree(&args, dir.path()));
    }
    for f in ["ranks.csv", "agreement.csv", "perf.csv", "interactions.csv", "manifest.json"] {
        assert!(dir.path().join("r1").join(f).is_file(), "{f} missing");
    }
    for f in ["ranks.csv", "agreement.csv", "perf.csv"] {
        assert_eq!(
            fs::read(dir.path().join("r1").join(f)).unwrap(),
            fs::read(dir.path().join("r2").join(f)).unwrap(),
            "{f} differs between reruns"
        );
    }
    let perf = fs::read_to_string(dir.path().join("r1/perf.csv")).unwrap();
    assert_eq!(perf.lines().count(), 1 + 2 * 2);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_object().unwrap().len(), 4);
}

#[test]
fn audit_missing_data_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = fiagree(&["audit", "nope.csv", "--label", "y"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn print_config_needs_no_data() {
    let dir = TempDir::new().unwrap();
    let out = fiagree(&["audit", "--print-config"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("bootstrap_k"));
}

fn write_ranks(path: &Path, ranks: &[(&str, u32)]) {
    let mut s = String::from("dataset,classifier,method,feature,rank\n");
    for (f, r) in ranks {
        s.push_str(&format!("d,logistic,permutation,{f},{r}\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn compare_reads_rank_files() {
    let dir = TempDir::new().unwrap();
    write_ranks(&dir.path().join("a.csv"), &[("f1", 1), ("f2", 2), ("f3", 3), ("f4", 4), ("f5", 5)]);
    write_ranks(&dir.path().join("b.csv"), &[("f1", 3), ("f2", 4), ("f3", 5), ("f4", 1), ("f5", 2)]);
    let out = fiagree(&["compare", "a.csv", "b.csv", "--out", "cmp.csv"], dir.path());
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.2000"), "{stdout}");
    assert!(dir.path().join("cmp.csv").is_file());
}

#[test]
fn compare_feature_mismatch_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    write_ranks(&dir.path().join("a.csv"), &[("f1", 1), ("f2", 2), ("c", 3)]);
    write_ranks(&dir.path().join("b.csv"), &[("f1", 1), ("f2", 2), ("z", 3)]);
    let out = fiagree(&["compare", "a.csv", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c, z"));
}

#[test]
fn interactions_subcommand_writes_profile() {
    let dir = TempDir::new().unwrap();
    ok(&fiagree(&["simulate", "--n", "100", "--interactions", "--out", "d.csv"], dir.path()));
    ok(&fiagree(&["interactions", "d.csv", "--label", "y", "--repeats", "1", "--max-rows", "20", "--out", "h"], dir.path()));
    let csv = fs::read_to_string(dir.path().join("h/interactions.csv")).unwrap();
    assert!(csv.starts_with("dataset,feature,median_h,flag_03,flag_05"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(fiagree(&["frobnicate"], dir.path()).status.code(), Some(1));
}
