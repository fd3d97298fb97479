use std::path::Path;
use std::process::{Command, Output};

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).display().to_string()
}

fn sdgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdgame")).args(args).output().unwrap()
}

#[test]
fn frozen_run_passes_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = sdgame(&["run", "--scenario", &scenario("frozen.json"), "--out-dir", out, "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    for artifact in ["payoff_table.csv", "paths.csv", "controls.csv", "vplus.csv", "vminus.bin"] {
        assert!(dir.path().join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn failing_check_gives_exit_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("frozen.json"))
        .unwrap()
        .replace(r#""oracle": {"value": {"kind": "terminal"}"#, r#""oracle": {"value": {"kind": "quadratic-heat", "sigma": 1}"#);
    let path = dir.path().join("wrong-oracle.json");
    std::fs::write(&path, text).unwrap();
    let o = sdgame(&["solve-hji", "--scenario", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "solve-hji only exports");
    let o = sdgame(&["run", "--scenario", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["failed"].as_array().unwrap().iter().any(|c| c == "solve-hji/oracle-plus"));
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("frozen.json")).unwrap().replace(r#""n_paths": 200"#, r#""n_paths": 0"#);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let o = sdgame(&["simulate", "--scenario", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("monte_carlo.n_paths"));
}

#[test]
fn stage_subcommand_prints_its_results() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["check-isaacs", "--scenario", &scenario("matrix-game.json"), "--out-dir", dir.path().to_str().unwrap(), "--quiet"];
    let o = sdgame(&args);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["report"]["max_gap"].as_f64().unwrap() > 0.5);
    assert!(report["report"]["worst_query"].is_object());
}

#[test]
fn solve_hji_binary_export_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("v.bin");
    let o = sdgame(&["solve-hji", "--scenario", &scenario("heat.json"), "--kind", "minus", "--out", file.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    let vg = sdgame_core::hji_solver::ValueGrid::read_binary(std::fs::File::open(&file).unwrap()).unwrap();
    assert_eq!(vg.kind(), sdgame_core::hji_solver::ValueKind::Minus);
    assert_eq!(vg.space().nodes_per_dim(), vec![161]);
}

#[test]
fn seed_and_paths_flags_override_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--scenario",
        &scenario("heat.json"),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--quiet",
        "--seed",
        "99",
        "--paths",
        "50",
    ];
    assert_eq!(sdgame(&args).status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 99);
    assert_eq!(summary["n_paths"], 50);
    assert_eq!(summary["results"]["simulate"]["cost"]["n_paths"], 50);
}
