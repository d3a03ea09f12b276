use std::path::Path;
use std::process::{Command, Output};

fn wamsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wamsplit")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_replay_agree_on_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let live = dir.path().join("live");
    let out = wamsplit(&["run", "--scenario", "trip2829", "--out", arg(&live)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("trip2829: detected-"), "{line}");
    for name in ["report.json", "stream.csv", "indices.csv", "events.csv", "alarms.csv", "splits.csv"] {
        assert!(live.join(name).is_file(), "missing {name}");
    }
    assert!(live.join("plots").is_dir());

    let replayed = dir.path().join("replay");
    let out = wamsplit(&["replay", "--stream", arg(&live.join("stream.csv")), "--out", arg(&replayed)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap()
    };
    let (a, b) = (report(&live), report(&replayed));
    assert_eq!(a["detection"]["t"], b["detection"]["t"]);
    assert_eq!(a["selection"]["scenario"], b["selection"]["scenario"]);
}

#[test]
fn scenario_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("calm.json");
    std::fs::write(&script, r#"{"events": [], "end_time_s": 1.0}"#).unwrap();
    let out = wamsplit(&["run", "--scenario", arg(&script), "--out", arg(&dir.path().join("o"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "calm: no-oos");
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"fault_cycles": [3, 12]}"#).unwrap();
    let out_dir = dir.path().join("sweep");
    let out = wamsplit(&["sweep", "--template", "flt1617", "--grid", arg(&grid), "--out", arg(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].contains("no-oos"), "{}", rows[1]);
    assert!(rows[2].contains("detected"), "{}", rows[2]);
    assert!(out_dir.join("runs/flt1617_c3.json").is_file());
}

#[test]
fn unknown_scenario_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = wamsplit(&["run", "--scenario", "nope", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn malformed_stream_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("bad.csv");
    std::fs::write(&stream, "n,t,delta_1,omega_1,island_1\n0,0,1,0,0\n1,x,1,0,0\n").unwrap();
    let out = wamsplit(&["replay", "--stream", arg(&stream), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
}
