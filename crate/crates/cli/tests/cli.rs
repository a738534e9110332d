use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn lmpinfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmpinfer")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lmpinfer(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parse_matpower_to_native() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case14.json");
    ok(&["parse", "--case", s(&fixture("case14.m")), "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"generators\""));
    // the native output parses back through the same command
    let again = ok(&["parse", "--case", s(&out)]);
    assert_eq!(again, text);
}

#[test]
fn gen_data_then_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let case = fixture("three_bus_congested.json");
    let data = dir.path().join("data");
    let stdout = ok(&[
        "gen-data", "--case", s(&case), "--solver", "dcopf", "--points", "150", "--seed", "11", "--out", s(&data),
    ]);
    assert!(stdout.contains("150 points"), "{stdout}");
    let csv = data.join("dataset.csv");
    assert!(csv.exists() && data.join("dataset.meta.json").exists());

    let s1 = dir.path().join("s1");
    let stdout = ok(&["attack-individual", "--dataset", s(&csv), "--case", s(&case), "--out", s(&s1)]);
    assert!(stdout.contains("per-generator:"), "{stdout}");
    assert!(s1.join("report.json").exists() && s1.join("summary.csv").exists());

    let s2 = dir.path().join("s2");
    let stdout = ok(&[
        "attack-aggregate", "--dataset", s(&csv), "--case", s(&case), "--seed", "11", "--out", s(&s2),
    ]);
    assert!(stdout.contains("conditions hold"), "{stdout}");
    assert!(stdout.contains("converged true"), "{stdout}");

    let merged = ok(&["report", s(&s1), s(&s2)]);
    let lines: Vec<&str> = merged.lines().collect();
    assert_eq!(lines[0], "grid,sample_range,n_iter,mse_a,mse_b,converged");
    assert_eq!(lines.len(), 3);
}

#[test]
fn run_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&[
        "run", "--case", s(&fixture("two_gen.json")), "--points", "60", "--scenario", "individual", "--out", s(&out),
    ]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("two_gen,2e-1,"), "{summary}");
    let file = out.join("merged.csv");
    ok(&["report", s(&out.join("report.json")), "--out", s(&file)]);
    assert_eq!(std::fs::read_to_string(file).unwrap(), summary);
}

#[test]
fn unguaranteed_aggregate_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let case = fixture("two_gen.json");
    let plain = ok(&["run", "--case", s(&case), "--scenario", "aggregate", "--out", s(&dir.path().join("a"))]);
    assert!(plain.contains("ran false"), "{plain}");
    let forced = ok(&[
        "run", "--case", s(&case), "--scenario", "aggregate", "--force-unguaranteed", "--max-iter", "5",
        "--init", "0.1,0.2", "--out", s(&dir.path().join("b")),
    ]);
    assert!(forced.contains("ran true"), "{forced}");
}

#[test]
fn missing_case_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmpinfer(&["run", "--case", s(&dir.path().join("nope.m")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.contains("nope.m"), "{err}");
    assert!(!dir.path().join("r").exists());
}

#[test]
fn invalid_flags_are_rejected() {
    let case = fixture("two_gen.json");
    assert!(!lmpinfer(&["gen-data", "--case", s(&case), "--solver", "ac", "--out", "x"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = lmpinfer(&["run", "--case", s(&case), "--range", "1.5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("range"));
}
