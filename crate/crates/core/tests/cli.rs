use std::fs;
use std::process::Command;

use ddlab::harness::{from_csv, Outcome};

#[test]
fn run_writes_reports_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let schedule = dir.path().join("schedule.txt");
    fs::write(&schedule, "# resolution N\n4 2\n6 4\n").unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "case = cavity\nscheme = th\ndegree = 2\nseed = 5\n").unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_ddlab"))
        .args(["run", "--config"])
        .arg(&config)
        .arg("--schedule")
        .arg(&schedule)
        .args(["--precond", "oras,mras:tvnf", "--coarse", "0,2", "--dump-traces", "--dump-partition", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = from_csv(&fs::read_to_string(out.join("report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| matches!(r.outcome, Outcome::Converged(_)) && r.seed == 5));
    assert!(rows[0].config.contains("case=cavity"));
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert_eq!(md.lines().count(), 4);
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("trace_")).count(), 8);
    assert_eq!(names.iter().filter(|n| n.starts_with("partition_")).count(), 2);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ddlab"))
        .args(["run", "--case", "nowhere", "--scheme", "th", "--degree", "2", "--precond", "oras", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
