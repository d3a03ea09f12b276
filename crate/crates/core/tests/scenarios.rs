use std::collections::BTreeSet;

use wamsplit::grid::ieee39;
use wamsplit::harness::{bundled, run_live, run_replay, sweep, write_outputs, SweepGrid, Verdict};
use wamsplit::sim::{island_members, run_scenario, PmuStream, StreamError};

#[test]
fn short_fault_stays_synchronous() {
    let case = ieee39();
    let script = bundled::scenario("flt1617").unwrap().with_fault_duration(3.0, case.f0_hz).unwrap();
    let stream = run_scenario(&case, &script).unwrap();
    for f in stream.frames.iter().filter(|f| f.t >= 2.0) {
        let hi = f.delta_deg.iter().cloned().fold(f64::MIN, f64::max);
        let lo = f.delta_deg.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi - lo < 120.0, "separation {:.1} deg at t={:.3}", hi - lo, f.t);
    }
    let cfg = bundled::config();
    let registry = bundled::registry(&case).unwrap();
    let out = run_live(&case, &script, &cfg, &registry).unwrap();
    assert_eq!(out.report.verdict, Verdict::NoOos);
    assert!(out.report.detection.is_none());
}

#[test]
fn non_finite_row_is_rejected_with_its_row_number() {
    let case = ieee39();
    let stream = run_scenario(&case, &wamsplit::sim::EventScript::quiet(0.1)).unwrap();
    let mut buf = Vec::new();
    stream.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    fields[2] = "NaN".into();
    lines[3] = fields.join(",");
    match PmuStream::read_csv(lines.join("\n").as_bytes()) {
        Err(StreamError::Schema { row, message }) => {
            assert_eq!(row, 3);
            assert!(message.contains("delta_1"), "{message}");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn frozen_angles_replay_without_detection() {
    let case = ieee39();
    let mut stream = run_scenario(&case, &wamsplit::sim::EventScript::quiet(0.05)).unwrap();
    let first = stream.frames[0].clone();
    stream.frames = (0..600)
        .map(|n| {
            let mut f = first.clone();
            f.n = n;
            f.t = n as f64 * stream.t_s;
            f
        })
        .collect();
    let cfg = bundled::config();
    let registry = bundled::registry(&case).unwrap();
    let out = run_replay(&case, stream, &cfg, &registry, "frozen").unwrap();
    assert_eq!(out.report.verdict, Verdict::NoOos);
    assert!(out.report.undamped_alarms.is_empty());
}

#[test]
fn stricter_energy_growth_never_detects_earlier() {
    let case = ieee39();
    let cfg = bundled::config();
    let registry = bundled::registry(&case).unwrap();
    let template = bundled::scenario("flt1617").unwrap();
    let grid = SweepGrid {
        config: None,
        fault_cycles: vec![],
        alpha_w: vec![1.05, 1.10, 1.15],
    };
    let points = sweep(&case, &template, &cfg, &registry, &grid).unwrap();
    let times: Vec<f64> = points.iter().map(|p| p.report.detection.as_ref().unwrap().t).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{times:?}");
}

#[test]
fn bundled_registry_cutsets_separate_their_groups() {
    let case = ieee39();
    let registry = bundled::registry(&case).unwrap();
    assert_eq!(registry.entries().len(), 12);
    for (k, group) in registry.groups().iter().enumerate() {
        let cut: BTreeSet<_> = registry.cutset(k).iter().copied().collect();
        let islands = island_members(&case.machine_islands(&cut));
        assert_eq!(islands.len(), 2);
        assert!(islands.contains(group));
    }
}

#[test]
fn two_corridor_outage_isolates_the_southern_units() {
    let case = ieee39();
    let cut: BTreeSet<_> = [(14, 15), (16, 17)].iter().map(|&(a, b)| case.find_branch(a, b).unwrap()).collect();
    let islands = island_members(&case.machine_islands(&cut));
    assert_eq!(islands.len(), 2);
    assert!(islands.contains(&vec![3, 4, 5, 6]));
}

#[test]
fn outputs_land_in_the_requested_directory() {
    let case = ieee39();
    let cfg = bundled::config();
    let registry = bundled::registry(&case).unwrap();
    let out = run_live(&case, &bundled::scenario("trip2829").unwrap(), &cfg, &registry).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out, &case).unwrap();
    for name in ["report.json", "stream.csv", "indices.csv", "events.csv", "alarms.csv", "splits.csv"] {
        let meta = std::fs::metadata(dir.path().join(name)).unwrap();
        assert!(meta.len() > 0, "{name} is empty");
    }
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: wamsplit::harness::RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, out.report);
    let stream = PmuStream::read_csv(std::fs::File::open(dir.path().join("stream.csv")).unwrap()).unwrap();
    assert_eq!(stream.frames.len(), out.stream.frames.len());
}
