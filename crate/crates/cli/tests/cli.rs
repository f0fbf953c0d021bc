//! End-to-end tests of the `dualrail` binary: outputs, formats, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dualrail")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).output().expect("binary runs")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dualrail-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn herald_writes_the_report_schema() {
    let dir = tmpdir("herald");
    let out = run_in(&dir, &["herald", "--config", data("fig2.cfg").to_str().unwrap(), "--eta", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("herald.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in
        ["m0", "m1", "Mh", "Eh", "eta", "p_herald", "F_raw", "F_herald", "conjugacy_residual"]
    {
        assert!(json.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(json["m0"].as_array().unwrap().len(), 4);
    assert_eq!(json["m0"][0].as_array().unwrap().len(), 2);
    let p = json["p_herald"].as_f64().unwrap();
    assert!(p > 0.99 && p <= 1.0);
}

#[test]
fn sweep_row_count_matches_points() {
    let dir = tmpdir("sweep");
    let out = run_in(
        &dir,
        &[
            "sweep",
            "--config",
            data("fig2.cfg").to_str().unwrap(),
            "--param",
            "rabi_scale",
            "--min",
            "-0.002",
            "--max",
            "0.002",
            "--points",
            "21",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22); // header + 21 rows
    assert!(fs::read_to_string(dir.join("sweep.csv.meta.json")).is_ok());
}

#[test]
fn dress_check_reports_the_pi_phase() {
    let dir = tmpdir("dress");
    let out = run_in(
        &dir,
        &[
            "dress-check",
            "--omega",
            "1.7320508",
            "--delta",
            "1.0",
            "--time",
            "6.2831853",
            "--out",
            "dress.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("dress.json")).unwrap()).unwrap();
    let phase = json["phase"].as_f64().unwrap();
    // the flag values are irrational constants truncated to 8 digits, which
    // limits the achievable phase accuracy
    assert!((phase.abs() - std::f64::consts::PI).abs() < 1e-6, "phase {phase}");
    let pop = json["return_population"].as_f64().unwrap();
    assert!((pop - 1.0).abs() < 1e-9);
}

#[test]
fn validation_failure_exits_2() {
    let dir = tmpdir("exit2");
    let bad = dir.join("bad.cfg");
    let text = fs::read_to_string(data("fig2.cfg")).unwrap().replace("delta2 = [0.0]", "delta2 = [0.7]");
    fs::write(&bad, text).unwrap();
    let out = run_in(&dir, &["herald", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tmpdir("exit3");
    let bad = dir.join("stiff.cfg");
    // unreachable tolerances force a step-size underflow during propagation
    let text = fs::read_to_string(data("fig2.cfg"))
        .unwrap()
        .replace("rtol = 1e-12", "rtol = 1e-300")
        .replace("atol = 1e-14", "atol = 1e-300");
    fs::write(&bad, text).unwrap();
    let out = run_in(&dir, &["herald", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn optimize_output_parses_back() {
    let dir = tmpdir("opt");
    // tiny budget: this only checks the round trip, not search quality
    let out = run_in(
        &dir,
        &["optimize", "--n", "2", "--seed", "7", "--evals", "40", "--out", "found.cfg"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("found.cfg")).unwrap();
    let rc = dualrail_core::parse_config(&text).unwrap();
    assert_eq!(rc.system.buffer_pulse.rabi.coeffs().len(), 3);
    assert!(fs::read_to_string(dir.join("history.csv")).unwrap().starts_with("eval,best_cost"));
}

#[test]
fn simulate_dumps_block_trajectories() {
    let dir = tmpdir("sim");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--config",
            data("fig4.cfg").to_str().unwrap(),
            "--rail",
            "0",
            "--samples",
            "11",
            "--outdir",
            "traj",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for q in 0..4 {
        let path = dir.join("traj").join(format!("traj_rail0_q{q}.csv"));
        let csv = fs::read_to_string(&path).unwrap();
        assert_eq!(csv.lines().count(), 12, "{path:?}");
        assert!(csv.starts_with("t_us,pop_"));
    }
}
