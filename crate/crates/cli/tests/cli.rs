use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amod")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_byte_identical_across_repeats_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["run", "--rounds", "20", "--replicates", "3", "--seed", "7"];
    let mut one = common.to_vec();
    one.extend(["--jobs", "1", "--out", path(&a)]);
    let mut many = common.to_vec();
    many.extend(["--jobs", "3", "--out", path(&b)]);
    assert!(amod(&one).status.success());
    assert!(amod(&many).status.success());
    for seed in 7..10 {
        for ext in ["trace.jsonl", "metrics.csv"] {
            let name = format!("iors-seed{seed}.{ext}");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("iors.summary.json")).unwrap()).unwrap();
    for key in ["mechanism", "config", "seeds", "w_mean", "w_std", "revenue_mean", "served_demand_mean", "runtime_ms_mean"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(summary["seeds"], serde_json::json!([7, 8, 9]));
}

#[test]
fn replay_regenerates_a_trace_from_its_header() {
    let dir = tempfile::tempdir().unwrap();
    assert!(amod(&["run", "--rounds", "15", "--mechanism", "auction", "--out", path(dir.path())]).status.success());
    let out = amod(&["replay", path(&dir.path().join("auction-seed0.trace.jsonl"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let header = fs::read_to_string(dir.path().join("auction-seed0.trace.jsonl")).unwrap();
    assert!(header.lines().next().unwrap().contains("\"settlement\":\"epoch\""));
}

#[test]
fn hindsight_over_its_cap_is_a_capacity_error() {
    let out = amod(&["run", "--mechanism", "optimal-hindsight", "--preset", "full", "--out", "/nonexistent/x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds cap"));
}

#[test]
fn invalid_flags_and_configs_are_rejected() {
    assert!(!amod(&["run", "--mechanism", "lottery"]).status.success());
    let out = amod(&["run", "--grid", "0x5", "--out", "/nonexistent/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overlaid_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "settlement = \"epoch\"\n[demand]\nrounds = 12\nfleet_size = 9\n").unwrap();
    let out = dir.path().join("out");
    let st = amod(&["run", "--config", path(&cfg), "--vehicles", "11", "--out", path(&out)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("iors.summary.json")).unwrap()).unwrap();
    assert_eq!(s["config"]["demand"]["rounds"], 12);
    assert_eq!(s["config"]["demand"]["fleet_size"], 11);
    assert_eq!(s["config"]["settlement"], "epoch");
}

#[test]
fn compare_needs_two_matching_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert!(amod(&["run", "--rounds", "12", "--replicates", "2", "--out", d]).status.success());
    let s = dir.path().join("iors.summary.json");
    assert_eq!(amod(&["compare", path(&s)]).status.code(), Some(2));

    let out = amod(&["compare", path(&s), path(&s)]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().last().unwrap().ends_with(",1.000000,1.000000"), "{table}");

    let other = dir.path().join("other");
    assert!(amod(&["run", "--rounds", "13", "--replicates", "2", "--mechanism", "auction", "--out", path(&other)])
        .status
        .success());
    assert_eq!(amod(&["compare", path(&s), path(&other.join("auction.summary.json"))]).status.code(), Some(2));
}

#[test]
fn empty_audit_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = amod(&["audit", "--rounds", "10", "--seeds", "1", "--per-seed", "0", "--out", path(dir.path())]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("NO_GAIN manipulations=0"));
}

#[test]
fn audit_of_the_ungated_fixture_fails_with_a_replayable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ungated.toml");
    fs::write(&cfg, "[iors]\nimprovement_gate = false\n").unwrap();
    let out_dir = dir.path().join("audit");
    let out = amod(&[
        "audit", "--config", path(&cfg), "--rounds", "40", "--seeds", "2", "--per-seed", "40", "--out", path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let bundle = out_dir.join("repro-0000.json");
    assert!(String::from_utf8_lossy(&out.stderr).contains("repro-0000.json"));
    let replay = amod(&["replay", path(&bundle)]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stdout));
    assert!(String::from_utf8_lossy(&replay.stdout).trim_end().ends_with("GAIN"));
}
