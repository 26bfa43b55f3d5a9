use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use faultbench_core::experiments::{read_results_csv, SweepSummary};
use faultbench_core::plant::{read_violations_csv, ViolationKind};
use faultbench_core::TraceLog;
use serde_json::{json, Value};
use tempfile::TempDir;

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(file)
}

fn faultbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faultbench"))
        .args(args)
        .env_remove("FAULTBENCH_JOBS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn case_study() -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data("case_study.json")).unwrap()).unwrap();
    v["dmp"]["demo_file"] = json!(data("gait_demo.csv").to_str().unwrap());
    v
}

fn write_scenario(dir: &TempDir, name: &str, v: &Value) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_presets_validate() {
    for preset in ["case_study.json", "minimal.json"] {
        let out = faultbench(&["validate", path_str(&data(preset))]);
        assert_eq!(code(&out), 0, "{preset}: {}", stdout(&out));
        assert_eq!(stdout(&out).trim(), "OK");
    }
}

#[test]
fn self_chained_injector_is_a_semantic_error() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["injectors"][1]["chain_to"] = json!("knee_vel_freeze");
    let out = faultbench(&["validate", &write_scenario(&dir, "s.json", &v)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("knee_vel_freeze"), "{}", stdout(&out));
}

#[test]
fn beta_override_cites_critical_damping() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["dmp"]["beta_z"] = json!(5.0);
    let out = faultbench(&["validate", &write_scenario(&dir, "s.json", &v)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("critical-damping"), "{}", stdout(&out));
}

#[test]
fn parse_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ \"clock\": ").unwrap();
    assert_eq!(code(&faultbench(&["validate", path_str(&broken)])), 2);
    assert_eq!(code(&faultbench(&["run", path_str(&broken)])), 2);

    let mut v = case_study();
    v["clock"]["dt"] = json!(0.001);
    assert_eq!(code(&faultbench(&["validate", &write_scenario(&dir, "u.json", &v)])), 2);
    assert_eq!(code(&faultbench(&["validate", "/nonexistent/scenario.json"])), 2);
}

#[test]
fn fault_free_run_is_nominal() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = faultbench(&["run", path_str(&data("case_study.json")), "--disable-faults", "--out", path_str(&out_dir)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "Nominal");
    let trace = TraceLog::read_csv(std::fs::File::open(out_dir.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.len(), 7000);
    let violations = read_violations_csv(std::fs::File::open(out_dir.join("violations.csv")).unwrap()).unwrap();
    assert!(violations.is_empty());
}

#[test]
fn long_stuck_fault_is_a_failure() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["injectors"][0]["event"] = json!({ "MeanTimeToFailure": { "mttf_s": 1.0, "sigma_s": 0.0 } });
    for i in 0..2 {
        v["injectors"][i]["effect"] = json!({ "ConstantTime": { "duration_s": 1.0 } });
    }
    let out_dir = dir.path().join("out");
    let out = faultbench(&["run", &write_scenario(&dir, "s.json", &v), "--out", path_str(&out_dir), "--seed", "3"]);
    assert_eq!(code(&out), 4);
    assert_eq!(stdout(&out).trim(), "Failure");
    let violations = read_violations_csv(std::fs::File::open(out_dir.join("violations.csv")).unwrap()).unwrap();
    assert!(violations.iter().any(|r| r.kind == ViolationKind::AngleFailure));
    assert!(violations.iter().all(|r| r.t >= 1.0));
}

#[test]
fn single_spike_is_an_error_not_a_failure() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["injectors"] = json!([{
        "name": "spike",
        "target_signal": "knee_right.theta",
        "fault_type": { "Bias": { "offset": 0.5 } },
        "event": { "MeanTimeToFailure": { "mttf_s": 2.0, "sigma_s": 0.0 } },
        "effect": "Once"
    }]);
    let out = faultbench(&["run", &write_scenario(&dir, "s.json", &v), "--out", path_str(dir.path()), "-q"]);
    assert_eq!(code(&out), 3);
    assert_eq!(stdout(&out).trim(), "Error");
}

#[test]
fn divergence_exits_with_5() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["injectors"] = json!([{
        "name": "flip",
        "target_signal": "knee_right.theta",
        "fault_type": { "BitFlip": { "n_bits": 1, "bit_positions": [62] } },
        "event": { "FailureProbability": { "p": 1.0 } },
        "effect": "Once"
    }]);
    let out = faultbench(&["run", &write_scenario(&dir, "s.json", &v), "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 5);
}

#[test]
fn zero_length_run_writes_empty_trace() {
    let dir = TempDir::new().unwrap();
    let mut v = case_study();
    v["clock"]["t_end_s"] = json!(0.0);
    let out_dir = dir.path().join("out");
    let out = faultbench(&["run", &write_scenario(&dir, "s.json", &v), "--out", path_str(&out_dir)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

fn short_case_study(dir: &TempDir, t_end: f64) -> String {
    let mut v = case_study();
    v["clock"]["t_end_s"] = json!(t_end);
    v["injectors"][0]["event"] = json!({ "FailureProbability": { "p": 0.005 } });
    write_scenario(dir, "short.json", &v)
}

#[test]
fn fine_preset_with_20_seeds_has_200_cells() {
    let dir = TempDir::new().unwrap();
    let scenario = short_case_study(&dir, 0.3);
    let out_dir = dir.path().join("fine");
    let out = faultbench(&["sweep", &scenario, "--preset", "fine", "--seeds", "20", "--out", path_str(&out_dir), "-q"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_results_csv(std::fs::File::open(out_dir.join("sweep_results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 200);
    let summary = SweepSummary::from_json(&std::fs::read_to_string(out_dir.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.durations.len(), 10);
    assert!(std::fs::read_to_string(out_dir.join("rmse_plot.svg")).unwrap().contains("<svg"));
}

#[test]
fn coarse_preset_has_11_durations() {
    let dir = TempDir::new().unwrap();
    let scenario = short_case_study(&dir, 0.2);
    let out_dir = dir.path().join("coarse");
    let out = faultbench(&["sweep", &scenario, "--preset", "coarse", "--seeds", "1", "--out", path_str(&out_dir), "-q"]);
    assert_eq!(code(&out), 0);
    let rows = read_results_csv(std::fs::File::open(out_dir.join("sweep_results.csv")).unwrap()).unwrap();
    let durations: Vec<f64> = rows.iter().map(|r| r.duration_s).collect();
    assert_eq!(durations, (2..=12).map(|i| f64::from(i) * 0.25).collect::<Vec<_>>());
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let scenario = short_case_study(&dir, 1.0);
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let out_dir = dir.path().join(format!("jobs{jobs}"));
        let out = Command::new(env!("CARGO_BIN_EXE_faultbench"))
            .args(["sweep", &scenario, "--durations", "0.05,0.1,0.2", "--seeds", "4", "--out", path_str(&out_dir), "-q"])
            .env("FAULTBENCH_JOBS", jobs)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push((
            std::fs::read(out_dir.join("sweep_results.csv")).unwrap(),
            std::fs::read(out_dir.join("sweep_summary.json")).unwrap(),
            std::fs::read(out_dir.join("rmse_plot.svg")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_rejects_unknown_varied_injector() {
    let dir = TempDir::new().unwrap();
    let scenario = short_case_study(&dir, 0.1);
    let out = faultbench(&["sweep", &scenario, "--durations", "0.1", "--seeds", "1", "--vary", "nope", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}
