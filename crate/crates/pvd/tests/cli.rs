mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::congress_trio;
use pvd_core::{samples, DeploymentModel, PhysicalPlan};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn pvd(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_pvd")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generated congress data and spec in a fresh directory.
fn congress_dir(rows: usize) -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let r = pvd(&["generate", "--sample", "congress", "--rows", &rows.to_string(), "--out", s(&data)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (tmp, data)
}

fn write_plan(dir: &Path, name: &str, plan: &PhysicalPlan) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(plan).unwrap()).unwrap();
    p
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(pvd(&["--help"]).code, 0);
    assert_eq!(pvd(&["--version"]).code, 0);
    let r = pvd(&["frobnicate"]);
    assert_eq!(r.code, 1);
    assert!(!r.stderr.is_empty());
    assert_eq!(pvd(&["verify", "p.json", "--exhaustive", "--sample", "3"]).code, 1);
    let r = pvd(&["generate", "--sample", "nope"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("unknown sample"));
}

#[test]
fn stats_are_deterministic() {
    let (tmp, data) = congress_dir(2000);
    let spec = data.join("spec.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = pvd(&["stats", "--spec", s(&spec), "--data", s(&data), "--out", s(out)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let text = fs::read_to_string(a.join("stats.json")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("stats.json")).unwrap());
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["votes"]["row_count"], 2000);
}

#[test]
fn empty_data_dir_lists_missing_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let r = pvd(&["stats", "--spec", "sample:join", "--data", s(tmp.path()), "--out", s(tmp.path())]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("orders.csv") && r.stderr.contains("customers.csv"), "{}", r.stderr);
}

#[test]
fn invalid_spec_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = samples::congress();
    spec.interactions[0].view = "nowhere".into();
    let p = tmp.path().join("spec.json");
    fs::write(&p, serde_json::to_string(&spec).unwrap()).unwrap();
    let r = pvd(&["optimize", "--spec", s(&p), "--data", s(tmp.path())]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("unknown view"), "{}", r.stderr);
}

#[test]
fn optimize_writes_identical_frontiers() {
    let (tmp, data) = congress_dir(3000);
    let spec = data.join("spec.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = pvd(&["optimize", "--spec", s(&spec), "--data", s(&data), "--out", s(out)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let mut files: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert!(files.len() >= 3 && files.contains(&"pareto.json".to_string()), "{files:?}");
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let pareto: serde_json::Value = serde_json::from_slice(&fs::read(a.join("pareto.json")).unwrap()).unwrap();
    let frontier = pareto["frontier"].as_array().unwrap();
    assert!(frontier.len() >= 2);
    // Every frontier plan file loads and verifies.
    for entry in frontier {
        let plan = a.join(entry["plan_file"].as_str().unwrap());
        let r = pvd(&["verify", s(&plan), "--spec", s(&spec), "--data", s(&data), "--sample", "60"]);
        assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
        assert!(r.stdout.contains("verification passed"));
    }
}

#[test]
fn tight_bounds_over_wan_are_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(pvd(&["generate", "--sample", "nm-join", "--rows", "500", "--out", s(&data)]).code, 0);
    let mut spec = samples::by_name("nm-join").unwrap();
    for i in &mut spec.interactions {
        i.latency_bound_ms = 1.0;
    }
    let p = tmp.path().join("tight.json");
    fs::write(&p, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let r = pvd(&["optimize", "--spec", s(&p), "--data", s(&data), "--deploy", "wan", "--out", s(&out)]);
    assert_eq!(r.code, 2, "{}{}", r.stdout, r.stderr);
    assert!(r.stderr.contains("exceeds bound"), "{}", r.stderr);
    let why: serde_json::Value = serde_json::from_slice(&fs::read(out.join("infeasible.json")).unwrap()).unwrap();
    assert!(why["estimate_ms"].as_f64().unwrap() > 1.0);
}

#[test]
fn explain_shows_where_time_goes() {
    let (tmp, data) = congress_dir(2000);
    let spec = data.join("spec.json");
    let (c, _, e) = congress_trio(&samples::congress());
    let pc = write_plan(tmp.path(), "c.json", &c);
    let pe = write_plan(tmp.path(), "e.json", &e);

    let r = pvd(&["explain", s(&pc), "--spec", s(&spec), "--data", s(&data), "--json"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    let slider = &report["breakdown"]["date_slider"];
    assert!(slider["ship_ms"].as_f64().unwrap() > slider["eval_ms"].as_f64().unwrap());
    assert_eq!(report["feasible"], false);

    let r = pvd(&["explain", s(&pe), "--spec", s(&spec), "--data", s(&data), "--json"]);
    let report: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(report["breakdown"]["date_slider"]["ship_ms"], 0.0);
    assert_eq!(report["breakdown"]["date_slider"]["build_ms"], 0.0);

    let r = pvd(&["explain", s(&pe), "--spec", s(&spec), "--data", s(&data)]);
    assert!(r.stdout.contains("date_slider") && r.stdout.contains("feasible: yes"), "{}", r.stdout);
}

#[test]
fn malformed_plan_names_the_position() {
    let (tmp, data) = congress_dir(100);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"views\": [\n    nope\n  ]\n}\n").unwrap();
    let r = pvd(&["explain", s(&bad), "--spec", "sample:congress", "--data", s(&data)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
}

#[test]
fn sampled_verification_is_reproducible() {
    let (tmp, data) = congress_dir(2000);
    let (_, d, _) = congress_trio(&samples::congress());
    let p = write_plan(tmp.path(), "d.json", &d);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = pvd(&[
            "verify", s(&p), "--spec", "sample:congress", "--data", s(&data), "--sample", "100", "--seed", "7", "--net", "none", "--out", s(out),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let bindings = |dir: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("verify.json")).unwrap()).unwrap();
        v["interactions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| (i["interaction"].clone(), i["checked"].clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bindings(&a), bindings(&b));
}

#[test]
fn injected_fault_fails_verification() {
    let (tmp, data) = congress_dir(2000);
    let (_, _, e) = congress_trio(&samples::congress());
    let p = write_plan(tmp.path(), "e.json", &e);
    let r = pvd(&["verify", s(&p), "--spec", "sample:congress", "--data", s(&data), "--sample", "30", "--inject-fault"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stdout.contains("mismatch at") && r.stdout.contains("b_lo"), "{}", r.stdout);
}

#[test]
fn bench_and_replay_round_trip() {
    let (tmp, data) = congress_dir(2000);
    let (c, _, _) = congress_trio(&samples::congress());
    let p = write_plan(tmp.path(), "c.json", &c);
    let deploy = tmp.path().join("slow.json");
    fs::write(&deploy, serde_json::to_string(&DeploymentModel::with_links(50.0, 1e5, 10.0, 1e4)).unwrap()).unwrap();
    let out = tmp.path().join("bench");
    let r = pvd(&[
        "bench", s(&p), "--spec", "sample:congress", "--data", s(&data), "--deploy", s(&deploy), "--sample", "20", "--out", s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("interaction,kind,bound_ms,p50,p95,max,violations"), "{csv}");
    assert_eq!(csv.lines().count(), 3);

    let events: Vec<serde_json::Value> =
        fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 40);
    for e in &events {
        assert!(e["measured_ms"].as_f64().unwrap() + e["simulated_net_ms"].as_f64().unwrap() >= 50.0);
    }

    let replayed = tmp.path().join("replay");
    let r = pvd(&[
        "replay", s(&p), "--trace", s(&out.join("trace.jsonl")), "--spec", "sample:congress", "--data", s(&data), "--deploy", s(&deploy), "--out", s(&replayed),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let again: Vec<serde_json::Value> =
        fs::read_to_string(replayed.join("events.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(again.len(), 40);
    for (a, b) in events.iter().zip(&again) {
        assert_eq!(a["output_digest"], b["output_digest"]);
        assert_eq!(b["matches_oracle"], true);
    }
}

#[test]
fn calibration_file_feeds_explain() {
    let (tmp, data) = congress_dir(500);
    let out = tmp.path().join("cal");
    let r = pvd(&["calibrate", "--rows", "20000", "--runs", "1", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cal = out.join("calibration.json");
    let (_, d, _) = congress_trio(&samples::congress());
    let p = write_plan(tmp.path(), "d.json", &d);
    let r = pvd(&["explain", s(&p), "--spec", "sample:congress", "--data", s(&data), "--calibration", s(&cal)]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    fs::write(&cal, "{\"c_scan\":0,\"c_hash\":1,\"c_probe\":1,\"c_sort\":1,\"c_cell\":1}").unwrap();
    let r = pvd(&["explain", s(&p), "--spec", "sample:congress", "--data", s(&data), "--calibration", s(&cal)]);
    assert_eq!(r.code, 1);
}
