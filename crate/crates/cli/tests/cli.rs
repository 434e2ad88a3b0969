//! End-to-end runs of the `kernex` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const P_JSON: &str = r#"{"type":"discrete","support":[[0],[1]],"pmf":[0.5,0.5]}"#;
const Q_JSON: &str = r#"{"type":"discrete","support":[[0],[1]],"pmf":[0.9,0.1]}"#;

fn kernex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), P_JSON).unwrap();
    std::fs::write(dir.path().join("q.json"), Q_JSON).unwrap();
    dir
}

#[test]
fn exponent_of_bernoulli_pair() {
    let dir = workdir();
    let out = kernex(dir.path(), &["exponent", "--p", "p.json", "--q", "q.json", "--c", "0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let e = v["exponent"].as_f64().unwrap();
    assert!((e - 0.111_572).abs() < 1e-6, "{e}");
    assert_eq!(v["regime"], "balanced");
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = workdir();
    std::fs::write(dir.path().join("x.csv"), "0.1,0.2\n0.3,0.4\n0.5,oops\n").unwrap();
    std::fs::write(dir.path().join("y.csv"), "0.1,0.2\n0.3,0.4\n").unwrap();
    let out = kernex(dir.path(), &["test", "--x", "x.csv", "--y", "y.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("row 3") && msg.contains("oops"), "{msg}");
}

#[test]
fn ragged_csv_is_rejected() {
    let dir = workdir();
    std::fs::write(dir.path().join("x.csv"), "1,2\n3\n").unwrap();
    let out = kernex(dir.path(), &["changepoint", "--input", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
}

#[test]
fn exit_codes() {
    let dir = workdir();
    let missing = kernex(dir.path(), &["exponent", "--p", "nope.json", "--q", "q.json", "--c", "0.5"]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = kernex(dir.path(), &["exponent", "--p", "p.json"]);
    assert_eq!(usage.status.code(), Some(2));

    let bad_c = kernex(dir.path(), &["exponent", "--p", "p.json", "--q", "q.json", "--c", "1.5"]);
    assert_eq!(bad_c.status.code(), Some(2), "{}", stderr(&bad_c));

    std::fs::write(dir.path().join("cfg.json"), r#"{"experiment":"two_sample","bogus":1}"#).unwrap();
    let config = kernex(dir.path(), &["simulate", "--config", "cfg.json"]);
    assert_eq!(config.status.code(), Some(2), "{}", stderr(&config));

    let unwritable = kernex(
        dir.path(),
        &["exponent", "--p", "p.json", "--q", "q.json", "--c", "0.5", "--out", "missing/dir/o.json"],
    );
    assert_eq!(unwritable.status.code(), Some(1));
}

fn temp_files(dir: &Path) -> Vec<PathBuf> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "tmp"))
        .collect()
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = workdir();
    // renaming a file over a directory fails after the temp file is written
    std::fs::create_dir(dir.path().join("taken")).unwrap();
    let out = kernex(dir.path(), &["exponent", "--p", "p.json", "--q", "q.json", "--c", "0.5", "--out", "taken"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("taken").is_dir());
    assert!(temp_files(dir.path()).is_empty());
}

#[test]
fn failed_run_keeps_previous_output() {
    let dir = workdir();
    std::fs::write(dir.path().join("result.json"), "previous\n").unwrap();
    let out = kernex(
        dir.path(),
        &["exponent", "--p", "p.json", "--q", "missing.json", "--c", "0.5", "--out", "result.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(dir.path().join("result.json")).unwrap(), "previous\n");
    assert!(temp_files(dir.path()).is_empty());
}

#[test]
fn simulate_is_reproducible() {
    let dir = workdir();
    std::fs::write(
        dir.path().join("sim.json"),
        r#"{"experiment":"two_sample",
            "p":{"type":"gaussian","mean":[0,0],"cov":[[1,0],[0,1]]},
            "q":{"type":"gaussian","mean":[0.8,0.8],"cov":[[1,0],[0,1]]},
            "n_grid":[15,30],"trials":12,
            "threshold":{"policy":"permutation","alpha":0.05,"B":60}}"#,
    )
    .unwrap();
    let run = |seed: &str, out: &str, threads: &str| {
        let o = kernex(
            dir.path(),
            &["--threads", threads, "simulate", "--config", "sim.json", "--seed", seed, "--out", out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("3", "a.csv", "1");
    let b = run("3", "b.csv", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a.clone()).unwrap();
    assert!(text.starts_with("# experiment=two_sample config_sha256="), "{text}");
    assert!(text.contains("seed=3"));
    assert_eq!(text.lines().count(), 4, "{text}");
    assert_ne!(run("4", "c.csv", "1"), a);
}

#[test]
fn test_subcommand_rejects_an_obvious_shift() {
    let dir = workdir();
    let x: String = (0..40).map(|i| format!("{}\n", (i % 7) as f64 * 0.1)).collect();
    let y: String = (0..40).map(|i| format!("{}\n", 6.0 + (i % 5) as f64 * 0.1)).collect();
    std::fs::write(dir.path().join("x.csv"), x).unwrap();
    std::fs::write(dir.path().join("y.csv"), y).unwrap();
    let out = kernex(dir.path(), &["test", "--x", "x.csv", "--y", "y.csv", "--bandwidth", "1", "--threshold", "permutation", "--B", "200"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["decision"], "reject_H0", "{v}");
}

#[test]
fn sanov_reports_no_violations() {
    let dir = workdir();
    let out = kernex(dir.path(), &["sanov", "--sizes", "10,20", "--verify-n", "8"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("0 violations"), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("n,m,beta,rate,dstar"));
}

fn check_golden(name: &str, args: &[&str]) {
    let dir = workdir();
    let out = kernex(dir.path(), args);
    assert!(out.status.success(), "{}", stderr(&out));
    let actual = String::from_utf8(out.stdout).unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; rerun with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "help text for `{name}` changed; rerun with UPDATE_GOLDEN=1");
}

#[test]
fn help_text_is_stable() {
    check_golden("kernex", &["--help"]);
    for sub in ["test", "changepoint", "exponent", "sanov", "simulate", "sweep"] {
        check_golden(sub, &[sub, "--help"]);
    }
}
