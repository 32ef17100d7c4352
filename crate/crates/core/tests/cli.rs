//! End-to-end runs of the `phnet` binary and the bundled scenarios.

use std::path::{Path, PathBuf};
use std::process::Command;

use phnet::scenario::{self, ExperimentParams, RunOptions, Scenario};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn phnet(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_phnet")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn bundled_scenarios_pass_their_experiments() {
    let dir = scenario_path("");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        let sc = Scenario::load(&dir.join(&name)).unwrap();
        let expect_fail = name.contains("overload");
        for r in scenario::run_experiments(&sc, &RunOptions::default()) {
            assert_eq!(r.exit_code != 0, expect_fail, "{name}: {}", scenario::summarize(&r));
        }
    }
}

#[test]
fn check_exit_codes() {
    let (code, stdout, _) = phnet(&["check", scenario_path("nine_bus.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["command"], "check");
    assert_eq!(report["config"]["meta"]["name"], "nine_bus");

    let (code, stdout, _) = phnet(&["check", scenario_path("nine_bus_overload.json").to_str().unwrap()]);
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["dispatch"]["binding_line"], 7);
    assert!(report["message"].as_str().unwrap().contains("line 7"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": \"v1\",\n \"meta\": {\"name\": \"x\"},\n \"bogus\": 1}").unwrap();
    let (code, _, stderr) = phnet(&["check", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("bogus") && stderr.contains("line"), "{stderr}");
    let (code, _, _) = phnet(&["check", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_writes_reports_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let path = scenario_path("ring_agreement.json");
    let (code, _, stderr) = phnet(&["simulate", path.to_str().unwrap(), "--out", out, "--seed", "99", "--tol", "1e-5"]);
    assert_eq!(code, 0, "{stderr}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ring_agreement_simulate.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 99);
    assert_eq!(report["simulation"]["settle_tol"], 1e-5);
    assert_eq!(report["monitor"]["v_monotone"], true);
    assert!(dir.path().join("ring_agreement_simulate.csv").exists());
    assert!(dir.path().join("ring_agreement_simulate.timing.json").exists());

    // The embedded config reproduces the same report.
    let embedded: Scenario = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(embedded.hash(), report["scenario_hash"].as_str().unwrap());
    let again = scenario::run_command(
        &embedded,
        scenario::Command::Simulate,
        &ExperimentParams::default(),
        &RunOptions { seed: Some(99), tol: Some(1e-5), ..Default::default() },
    );
    let sim = again.simulation.unwrap();
    assert_eq!(sim.samples as u64, report["simulation"]["samples"].as_u64().unwrap());
    assert_eq!(sim.settle_time, report["simulation"]["settle_time"].as_f64());
    for (a, b) in sim.terminal_outputs.iter().zip(report["simulation"]["terminal_outputs"].as_array().unwrap()) {
        assert!((a - b.as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn warm_start_and_probe() {
    let path = scenario_path("integral_regulation.json");
    let (code, stdout, stderr) = phnet(&["simulate", path.to_str().unwrap(), "--warm-start", "0.1"]);
    assert_eq!(code, 0, "{stderr}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["config"]["controller"]["warm_start"]["radius"], 0.1);

    let (code, stdout, _) = phnet(&["probe", scenario_path("nine_bus.json").to_str().unwrap(), "--radius", "0.2", "--trials", "4"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["probe"]["trials"], 4);
    assert_eq!(report["probe"]["successes"], 4);
}

#[test]
fn dispatch_output_is_byte_stable() {
    let path = scenario_path("distributed_six.json");
    let (c1, a, _) = phnet(&["dispatch", path.to_str().unwrap()]);
    let (c2, b, _) = phnet(&["dispatch", path.to_str().unwrap()]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(report["steady_state"]["residuals"]["qp_deviation"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn run_parallel_matches_sequential() {
    let path = scenario_path("nine_bus.json");
    let seq = tempfile::tempdir().unwrap();
    let par = tempfile::tempdir().unwrap();
    let (c1, _, _) = phnet(&["run", path.to_str().unwrap(), "--out", seq.path().to_str().unwrap()]);
    let (c2, _, _) = phnet(&["run", path.to_str().unwrap(), "--out", par.path().to_str().unwrap(), "--parallel"]);
    assert_eq!((c1, c2), (0, 0));
    for k in 1..=4 {
        let name = std::fs::read_dir(seq.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .find(|n| n.starts_with(&format!("nine_bus_{k}_")) && n.ends_with(".json") && !n.contains("timing"))
            .unwrap();
        assert_eq!(std::fs::read(seq.path().join(&name)).unwrap(), std::fs::read(par.path().join(&name)).unwrap());
    }
}
