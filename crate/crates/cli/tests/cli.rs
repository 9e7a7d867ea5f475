use std::path::Path;
use std::process::{Command, Output};

use reach_sos::io::{inside_flag, report_from_json, CertificateFile, GridFile};
use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reach-sos"))
        .args(args)
        .current_dir(dir)
        .env_remove("REACH_SOS_THREADS")
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("stderr is JSON")
}

#[test]
fn solve_then_grid_gives_forty_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "toy", "--order", "4", "--u-zero"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = report_from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report.order, 4);
    assert_eq!(report.horizon, None);
    assert!(report.passed());

    let cert = CertificateFile::load(dir.path().join("toy-2r4.cert.json")).unwrap();
    assert_eq!(cert.order, 4);
    assert_eq!(cert.variables, vec!["x1", "x2"]);
    assert_eq!(cert.problem_hash.len(), 64);
    assert!(dir.path().join("toy-2r4.report.json").exists());

    let out = run(
        &[
            "grid",
            "toy-2r4.cert.json",
            "--res",
            "200",
            "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let g =
        GridFile::from_text(&std::fs::read_to_string(dir.path().join("g.csv")).unwrap()).unwrap();
    assert_eq!(g.rows.len(), 40_000);
    assert!(g
        .rows
        .iter()
        .all(|r| r.inside == inside_flag(r.v, g.u, g.t)));
}

#[test]
fn certify_recomputes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        &["solve", "toy", "--order", "4", "--volume-samples", "0"],
        dir.path()
    )
    .status
    .success());
    let saved =
        report_from_json(&std::fs::read_to_string(dir.path().join("toy-2r4.report.json")).unwrap())
            .unwrap();
    let out = run(
        &[
            "certify",
            "toy",
            "toy-2r4.cert.json",
            "--volume-samples",
            "0",
            "--report",
            "again.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again =
        report_from_json(&std::fs::read_to_string(dir.path().join("again.json")).unwrap()).unwrap();
    assert_eq!(again.containment, saved.containment);
    assert_eq!(again.u, saved.u);
    assert_eq!(again.status, saved.status);

    let out = run(
        &[
            "certify",
            "toy",
            "toy-2r4.cert.json",
            "--volume-samples",
            "0",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    let other = report_from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(other.seed, 9);
    assert_ne!(other.containment, saved.containment);
}

#[test]
fn sweep_writes_reports_and_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "sweep",
            "toy",
            "--orders",
            "4,6",
            "--grid-res",
            "20",
            "--volume-samples",
            "0",
            "--out-dir",
            "s",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["monotone"], Value::Bool(true));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
    for o in [4, 6] {
        let text =
            std::fs::read_to_string(dir.path().join(format!("s/toy-2r{o}.grid.csv"))).unwrap();
        assert_eq!(text.lines().count(), 401);
    }
    assert!(dir.path().join("s/toy-sweep.json").exists());
}

#[test]
fn dump_writes_the_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "solve",
            "toy",
            "--order",
            "4",
            "--volume-samples",
            "0",
            "--dump",
            "p.txt",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("p.txt")).unwrap();
    let header: Vec<usize> = text
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(header.len(), 2);
}

#[test]
fn errors_are_json_records() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "name = \"bad\"\nvariables = [\"a\", \"b\"]\ndynamics = [\"a\", \"b\", \"a\"]\n",
    )
    .unwrap();
    let out = run(&["solve", "bad.toml", "--order", "4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "schema");
    assert!(rec["details"].as_array().unwrap().len() >= 3);

    let out = run(&["solve", "missing.toml"], dir.path());
    assert_eq!(error_record(&out)["error"], "io");

    let out = run(&["solve", "toy", "--order", "5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "usage");

    let out = run(&["solve", "toy", "--backend", "nope"], dir.path());
    assert_eq!(error_record(&out)["error"], "usage");

    let out = run(&["solve", "toy", "--T", "10", "--u-zero"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "usage");

    std::fs::write(dir.path().join("c.json"), "{}").unwrap();
    let out = run(
        &["grid", "c.json", "--res", "3", "--out", "g.csv"],
        dir.path(),
    );
    assert_eq!(error_record(&out)["error"], "format");
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_reach-sos"))
        .args(["solve", "toy", "--order", "4"])
        .current_dir(dir.path())
        .env("REACH_SOS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(error_record(&out)["error"], "usage");
}
