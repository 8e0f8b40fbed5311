use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const PROFILE: &str = "\
version 1
fingerprint test
level 1 32768
level 2 1048576
level 3 33554432
level 4 17179869184
threads 1 2 4
sample 16384 1 1
sample 16384 2 6
sample 16384 4 20
sample 524288 1 3
sample 524288 2 5
sample 524288 4 12
sample 16777216 1 10
sample 16777216 2 9
sample 16777216 4 11
sample 50331648 1 80
sample 50331648 2 40
sample 50331648 4 30
";

fn adagraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adagraph"))
        .current_dir(dir)
        .env_remove("ADAGRAPH_PROFILE")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = adagraph(
        dir.path(),
        &[
            "rmat",
            "--scale",
            "9",
            "--edge-factor",
            "8",
            "--out",
            "g.el",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    dir
}

#[test]
fn rmat_then_run_reports_standard_repetitions() {
    let dir = setup();
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "bfs",
            "--mode",
            "sequential",
            "--graph",
            "g.el",
            "--sessions",
            "2",
            "--csv",
            "s.csv",
            "--raw-csv",
            "r.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = read_csv(&dir.path().join("s.csv"));
    assert_eq!(summary.len(), 1);
    let row = &summary[0];
    assert_eq!(&row[0], "bfs");
    assert_eq!(&row[2], "sequential");
    assert_eq!(&row[4], "2");
    assert_eq!(&row[5], "100");

    // Throughput is recomputable from the per-run records.
    let raw = read_csv(&dir.path().join("r.csv"));
    assert_eq!(raw.len(), 100);
    let edges: f64 = raw.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
    let ns: f64 = raw.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    let reported: f64 = row[7].parse().unwrap();
    let expected = 2.0 * edges / (ns / 1e9);
    assert!(
        (reported - expected).abs() <= 1e-6 * expected,
        "{reported} vs {expected}"
    );
}

#[test]
fn pagerank_defaults_to_24_runs_and_scheduler_writes_a_trace() {
    let dir = setup();
    std::fs::write(dir.path().join("m.profile"), PROFILE).unwrap();
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "pr-pull",
            "--mode",
            "scheduler",
            "--graph",
            "g.el",
            "--profile",
            "m.profile",
            "--threads",
            "1",
            "--trace",
            "t.txt",
            "--csv",
            "s.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = read_csv(&dir.path().join("s.csv"));
    assert_eq!(&summary[0][1], "pull");
    assert_eq!(&summary[0][5], "24");
    let trace = std::fs::read_to_string(dir.path().join("t.txt")).unwrap();
    assert!(trace.lines().any(|l| l.starts_with("iter ")));
}

#[test]
fn scheduler_without_profile_points_at_calibrate() {
    let dir = setup();
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "bfs",
            "--mode",
            "scheduler",
            "--graph",
            "g.el",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("calibrate"), "{}", stderr(&out));
}

#[test]
fn bad_arguments_fail() {
    let dir = setup();
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "bfs",
            "--mode",
            "sequential",
            "--graph",
            "g.el",
            "--bogus",
        ],
    );
    assert!(!out.status.success());
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "dfs",
            "--mode",
            "sequential",
            "--graph",
            "g.el",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = adagraph(
        dir.path(),
        &[
            "run",
            "--algo",
            "bfs",
            "--mode",
            "sequential",
            "--graph",
            "missing.el",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_marks_failed_cells_and_keeps_going() {
    let dir = setup();
    std::fs::write(
        dir.path().join("matrix.txt"),
        "graphs = g.el\nalgos = bfs, pr-push\nmodes = sequential, scheduler\nsessions = 1\nruns_per_session = 2\n",
    )
    .unwrap();
    let out = adagraph(
        dir.path(),
        &["bench", "--matrix", "matrix.txt", "--csv", "b.csv"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_csv(&dir.path().join("b.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        if &row[2] == "scheduler" {
            assert_eq!(&row[7], "ERROR");
        } else {
            assert!(row[7].parse::<f64>().unwrap() > 0.0);
        }
    }
}

#[test]
fn calibrate_reuses_an_existing_profile() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.profile"), PROFILE).unwrap();
    let out = adagraph(
        dir.path(),
        &["calibrate", "--profile", "m.profile", "--threads-max", "1"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("reused"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sample 16384 4"));
}
