use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consensus-lut"))
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Builds a small table around the reference scenarios into `dir`.
fn small_table(dir: &Path) -> PathBuf {
    let axes = dir.join("axes.ini");
    fs::write(&axes, "[axes]\ndr = -80:10:60\nvi = 4:2:28\nvj = 10:2:22\n").unwrap();
    let cands = dir.join("cands.ini");
    fs::write(&cands, "[candidates]\ngamma = 3, 4, 5\nk = 0.1\n").unwrap();
    let out = dir.join("table.txt");
    let o = bin(&[
        "build-table",
        "--axes", s(&axes),
        "--candidates", s(&cands),
        "--config", s(&configs().join("sim.ini")),
        "--out", s(&out),
        "--workers", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn scenario(dir: &Path, name: &str, dr0: f64, controller: &str) -> PathBuf {
    let p = dir.join(format!("{name}.ini"));
    fs::write(
        &p,
        format!(
            "[scenario]\nid = {name}\ndr0 = {dr0}\nvi0 = 28\nvj0 = 14\nduration = 60\ncontroller = {controller}\n"
        ),
    )
    .unwrap();
    p
}

#[test]
fn build_inspect_and_run() {
    let dir = TempDir::new().unwrap();
    let table = small_table(dir.path());
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("gaintable-v1"));

    let o = bin(&["inspect-table", s(&table)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("shape [15, 13, 7]"));

    let o = bin(&["inspect-table", s(&table), "--cell", "13", "12", "2"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("dr=50 vi=28 vj=14"));

    let out = dir.path().join("run");
    let sc = scenario(dir.path(), "near", 50.0, "lookup");
    let o = bin(&[
        "run",
        "--scenario", s(&sc),
        "--config", s(&configs().join("sim.ini")),
        "--table", s(&table),
        "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(out.join("near_lookup.csv")).unwrap();
    assert!(traj.starts_with("t,r_i,v_i,a_i,jerk_i,r_j,v_j,gap,gap_error,consensus_flag"));
    let report = fs::read_to_string(out.join("near_report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().contains(",false,"));
}

#[test]
fn out_of_range_start_uses_fallback() {
    let dir = TempDir::new().unwrap();
    let table = small_table(dir.path());
    let sc = scenario(dir.path(), "far", 150.0, "lookup");
    let o = bin(&[
        "run",
        "--scenario", s(&sc),
        "--config", s(&configs().join("sim.ini")),
        "--table", s(&table),
        "--out-dir", s(&dir.path().join("run")),
        "--allow-unsafe",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fallback"));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("far,lookup,,,true,"), "{row}");
}

#[test]
fn unsafe_run_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    // The fixed pair closes in too fast from this start.
    let sc = scenario(dir.path(), "close", 50.0, "fixed_consensus");
    let args = |extra: &[&str]| {
        let mut v = vec![
            "run".to_string(),
            "--scenario".into(), s(&sc).into(),
            "--config".into(), s(&configs().join("baselines.ini")).into(),
            "--out-dir".into(), s(&dir.path().join("run")).into(),
        ];
        v.extend(extra.iter().map(|x| x.to_string()));
        v
    };
    let strict = args(&[]);
    let o = bin(&strict.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let lenient = args(&["--allow-unsafe"]);
    let o = bin(&lenient.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success());
}

#[test]
fn stability_for_single_pair_and_table() {
    let o = bin(&["stability", "--gamma", "1", "--k", "0.1"]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("string_stable=true"), "{out}");

    let dir = TempDir::new().unwrap();
    let table = small_table(dir.path());
    let o = bin(&["stability", "--table", s(&table), "--sweep", s(&configs().join("sweep.ini"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("all stored gain pairs string stable: true"));

    assert!(!bin(&["stability"]).status.success());
}

#[test]
fn suite_writes_comparison() {
    let dir = TempDir::new().unwrap();
    let table = small_table(dir.path());
    let out = dir.path().join("suite");
    let o = bin(&[
        "suite",
        "--table", s(&table),
        "--config", s(&configs().join("sim.ini")),
        "--baselines", s(&configs().join("baselines.ini")),
        "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = fs::read_to_string(out.join("comparison.csv")).unwrap();
    // Header plus three controllers on four scenarios.
    assert_eq!(cmp.lines().count(), 13);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("scenario4: lookup"));
    assert!(out.join("scenario1_linear_feedback.csv").exists());
}

#[test]
fn corrupt_table_is_rejected() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "gaintable-v999\n").unwrap();
    let o = bin(&["inspect-table", s(&bad)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}
