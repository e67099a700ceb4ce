use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use roadcast::metrics::{ExitRow, GridRow, LaneChangeRecord};
use roadcast::output::read_csv;
use roadcast::presets::NAMES;
use roadcast::sweep::SummaryRow;

fn roadcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let p = dir.join("short.cfg");
    fs::write(&p, "# quick run\nduration = 2 min\nseed = 3\n").unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn presets_are_listed() {
    let out = roadcast(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in NAMES {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn run_writes_tables_with_the_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = roadcast(&[
        "run",
        "--preset",
        "velocity_motorway",
        "--config",
        &cfg,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let events = fs::read_to_string(out_dir.join("events.csv")).unwrap();
    assert!(events.lines().any(|l| l == "# seed = 3"));
    assert!(events.lines().any(|l| l.starts_with("# duration = 120")));

    let (h, exits): (Vec<String>, Vec<ExitRow>) = read_csv(&out_dir.join("exits.csv")).unwrap();
    assert!(h.contains(&"seed = 3".to_owned()));
    assert!(h.contains(&"traffic_load = 4400.0".to_owned()));
    assert_eq!(exits.len(), 4);
    let (_, _): (Vec<String>, Vec<LaneChangeRecord>) =
        read_csv(&out_dir.join("lane_changes.csv")).unwrap();
    let (_, grid): (Vec<String>, Vec<GridRow>) =
        read_csv(&out_dir.join("velocity_grid.csv")).unwrap();
    assert!(!grid.is_empty());
}

#[test]
fn same_seed_writes_identical_event_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|sub| {
            let d = dir.path().join(sub);
            let out = roadcast(&["run", "--config", &cfg, "--out-dir", d.to_str().unwrap()]);
            assert!(out.status.success());
            fs::read(d.join("events.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn invalid_config_fails_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    fs::write(&p, "traffic_load = -5 veh/h\n").unwrap();
    let out = roadcast(&[
        "run",
        "--config",
        p.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("traffic_load"), "{err}");
    assert!(!dir.path().join("events.csv").exists());

    fs::write(&p, "no_such_key = 1\n").unwrap();
    let out = roadcast(&["run", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("no_such_key"));
}

#[test]
fn unknown_preset_and_policy_are_rejected() {
    let out = roadcast(&["run", "--preset", "autobahn"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("autobahn"));

    let out = roadcast(&["run", "--policy", "gossip"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("gossip"));
}

#[test]
fn sweep_writes_per_seed_and_median_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = roadcast(&[
        "sweep",
        "--config",
        &cfg,
        "--seeds",
        "1..3",
        "--jobs",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, rows): (Vec<String>, Vec<SummaryRow>) =
        read_csv(&dir.path().join("sweep_summary.csv")).unwrap();
    assert!(h.contains(&"seeds = 1..3".to_owned()));
    assert_eq!(rows.iter().filter(|r| r.row == "seed").count(), 6);
    assert_eq!(rows.iter().filter(|r| r.row == "median").count(), 2);
    assert!(rows.iter().all(|r| r.error.is_empty()));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("comms") && stdout.contains("control"));

    let bad = roadcast(&["sweep", "--config", &cfg, "--seeds", "5..2"]);
    assert!(!bad.status.success());
}
