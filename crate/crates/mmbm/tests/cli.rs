use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmbm::RunManifest;
use serde_json::Value;
use tempfile::TempDir;

const M1: &str = r#"{"Q": [[0]], "mu": [-1], "sigma2": [1], "b": 1}"#;
const M2: &str = r#"{"Q": [[-1, 1], [1, -1]], "mu": [1, -2], "sigma2": [1, 1], "b": 1}"#;
const BAD_Q: &str = r#"{"Q": [[1, 1], [1, -1]], "mu": [1, -2], "sigma2": [1, 1], "b": 1}"#;
const ZERO_DRIFT: &str = r#"{"Q": [[-1, 1], [1, -1]], "mu": [1, -1], "sigma2": [1, 1], "b": 1}"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn model(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn mmbm(args: &[&str], model: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbm"))
        .args(args)
        .arg(model)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

/// Parses the single JSON error line on stderr.
fn error_code(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap();
    let v: Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["level"], "error");
    v["code"].as_str().unwrap().to_string()
}

#[test]
fn solve_scalar_density_at_zero() {
    let s = Sandbox::new();
    let out = s.out("solve");
    let r = mmbm(&["solve"], &s.model("m1.json", M1), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = json(&out.join("summary.json"));
    assert!((summary["level_density_at_0"].as_f64().unwrap() - 2.313035).abs() <= 1e-6);
    assert_eq!(summary["limit"], true);
    assert!(summary.get("eps").is_none());
    let (header, rows) = csv_rows(&out.join("density.csv"));
    assert_eq!(header, ["x", "phase_1"]);
    assert_eq!(rows.len(), 1000);
}

#[test]
fn solve_grid_rows_increase() {
    let s = Sandbox::new();
    let out = s.out("solve");
    assert!(mmbm(&["solve", "--grid", "10"], &s.model("m2.json", M2), &out).status.success());
    let (header, rows) = csv_rows(&out.join("density.csv"));
    assert_eq!(header, ["x", "phase_1", "phase_2"]);
    assert_eq!(rows.len(), 10);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["k0_eigenvalues"].as_array().unwrap().len(), 2);
    assert_eq!(summary["nu0"].as_array().unwrap().len(), 4);
}

#[test]
fn invalid_generator_exits_2() {
    let s = Sandbox::new();
    let r = mmbm(&["solve"], &s.model("bad.json", BAD_Q), &s.out("o"));
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_code(&r), "NotAGenerator");
    assert!(!s.out("o").join("manifest.json").exists());
}

#[test]
fn unreadable_or_malformed_model_exits_2() {
    let s = Sandbox::new();
    let r = mmbm(&["solve"], &s.out("missing.json"), &s.out("o"));
    assert_eq!((r.status.code(), error_code(&r).as_str()), (Some(2), "IoError"));
    let r = mmbm(&["solve"], &s.model("x.json", "{\"Q\": 3}"), &s.out("o"));
    assert_eq!((r.status.code(), error_code(&r).as_str()), (Some(2), "InvalidModelFile"));
}

#[test]
fn usage_errors_are_json() {
    let s = Sandbox::new();
    let r = mmbm(&["fluid", "--eps", "abc"], &s.model("m2.json", M2), &s.out("o"));
    assert_eq!((r.status.code(), error_code(&r).as_str()), (Some(2), "UsageError"));
}

#[test]
fn fluid_check_alt_and_masses() {
    let s = Sandbox::new();
    let out = s.out("fluid");
    let r = mmbm(&["fluid", "--eps", "0.05", "--check-alt"], &s.model("m2.json", M2), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = json(&out.join("summary.json"));
    assert!(summary["discrepancy"].as_f64().unwrap() <= 1e-8);
    assert_eq!(summary["eps"], 0.05);
    for key in ["mass0", "massb"] {
        let v = summary[key].as_array().unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| x.as_f64().unwrap() >= 0.0));
    }
    assert!(summary["c"].as_f64().unwrap() > 0.0);
    assert!((summary["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn fluid_eps_too_large_exits_2() {
    let s = Sandbox::new();
    let r = mmbm(&["fluid", "--eps", "5"], &s.model("m2.json", M2), &s.out("o"));
    assert_eq!((r.status.code(), error_code(&r).as_str()), (Some(2), "EpsTooLarge"));
}

#[test]
fn sweep_slope_on_scalar_model() {
    let s = Sandbox::new();
    let out = s.out("sweep");
    let r = mmbm(&["sweep", "--eps-list", "0.2,0.1,0.05,0.025"], &s.model("m1.json", M1), &out);
    assert!(r.status.success());
    let report = json(&out.join("sweep.json"));
    let slope = report["slope"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&slope), "{slope}");
    let (header, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(header, ["eps", "distance", "mass0", "massb", "cond_N"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn sweep_single_eps_has_null_slope() {
    let s = Sandbox::new();
    let out = s.out("sweep");
    assert!(mmbm(&["sweep", "--eps-list", "0.1"], &s.model("m1.json", M1), &out).status.success());
    let report = json(&out.join("sweep.json"));
    assert!(report["slope"].is_null());
    assert!(report["points"][0]["distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_unsorted_list_warns_and_sorts() {
    let s = Sandbox::new();
    let out = s.out("sweep");
    let r = mmbm(&["sweep", "--eps-list", "0.05,0.2,0.1"], &s.model("m1.json", M1), &out);
    assert!(r.status.success());
    let warned = String::from_utf8_lossy(&r.stderr)
        .lines()
        .filter_map(|l| serde_json::from_str::<Value>(l).ok())
        .any(|v| v["level"] == "warn" && v["code"] == "UnsortedEpsList");
    assert!(warned);
    let (_, rows) = csv_rows(&out.join("sweep.csv"));
    let eps: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(eps, [0.2, 0.1, 0.05]);
    assert_eq!(json(&out.join("sweep.json"))["resorted"], true);
}

#[test]
fn simulate_defaults_match_closed_form() {
    let s = Sandbox::new();
    let out = s.out("sim");
    let r = mmbm(&["simulate"], &s.model("m1.json", M1), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = json(&out.join("summary.json"));
    assert!(summary["ks"].as_f64().unwrap() <= 0.02);
    assert_eq!(summary["config"]["mode"], "mmbm");
    let (header, rows) = csv_rows(&out.join("histogram.csv"));
    assert_eq!(header, ["bin_left", "bin_right", "phase_1"]);
    assert_eq!(rows.len(), 100);
    // Histogram densities integrate to the interior mass.
    let mass: f64 = rows.iter().map(|r| r[2] * (r[1] - r[0])).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn simulate_fixed_seed_is_byte_identical() {
    let s = Sandbox::new();
    let model = s.model("m2.json", M2);
    let args = ["simulate", "--seed", "42", "--horizon", "3000", "--burn-in", "100", "--paths", "3"];
    assert!(mmbm(&args, &model, &s.out("a")).status.success());
    assert!(mmbm(&args, &model, &s.out("b")).status.success());
    let a = std::fs::read(s.out("a").join("histogram.csv")).unwrap();
    let b = std::fs::read(s.out("b").join("histogram.csv")).unwrap();
    assert_eq!(a, b);
    let other = ["simulate", "--seed", "43", "--horizon", "3000", "--burn-in", "100", "--paths", "3"];
    assert!(mmbm(&other, &model, &s.out("c")).status.success());
    assert_ne!(a, std::fs::read(s.out("c").join("histogram.csv")).unwrap());
}

#[test]
fn simulate_fluid_requires_eps() {
    let s = Sandbox::new();
    let model = s.model("m2.json", M2);
    let r = mmbm(&["simulate", "--mode", "fluid"], &model, &s.out("o"));
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_code(&r), "InvalidConfig");

    let out = s.out("f");
    let r = mmbm(&["simulate", "--mode", "fluid", "--eps", "0.05", "--horizon", "2e4"], &model, &out);
    assert!(r.status.success());
    let summary = json(&out.join("summary.json"));
    assert!(summary["ks"].as_f64().unwrap() <= 0.02);
    let (header, _) = csv_rows(&out.join("histogram.csv"));
    assert_eq!(header.len(), 4);
    let at0 = summary["boundary_fractions"]["at0"].as_array().unwrap();
    assert!(at0.iter().map(|v| v.as_f64().unwrap()).sum::<f64>() > 0.0);
}

#[test]
fn compare_scalar_model_passes_all_checks() {
    let s = Sandbox::new();
    let out = s.out("cmp");
    let r = mmbm(&["compare"], &s.model("m1.json", M1), &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = json(&out.join("report.json"));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["pass"] == true), "{report}");
}

#[test]
fn compare_two_phase_time_reversed_identity() {
    let s = Sandbox::new();
    let out = s.out("cmp");
    let r = mmbm(&["compare", "--horizon", "2e4"], &s.model("m2.json", M2), &out);
    assert!(r.status.success());
    let report = json(&out.join("report.json"));
    let tr = &report["checks"][0];
    assert_eq!(tr["name"], "closed_form_vs_time_reversed");
    assert!(tr["distance"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn compare_zero_drift_exits_2() {
    let s = Sandbox::new();
    let r = mmbm(&["compare"], &s.model("z.json", ZERO_DRIFT), &s.out("o"));
    assert_eq!((r.status.code(), error_code(&r).as_str()), (Some(2), "ZeroMeanDrift"));
}

#[test]
fn manifest_lists_every_output_and_is_written_last() {
    let s = Sandbox::new();
    let out = s.out("solve");
    let model = s.model("m2.json", M2);
    assert!(mmbm(&["solve", "--grid", "50"], &model, &out).status.success());
    let manifest = RunManifest::read(&out).unwrap();
    assert_eq!(manifest.command, "solve");
    assert_eq!(manifest.parameters["grid"], 50);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    let mut listed: Vec<String> = manifest
        .outputs
        .iter()
        .map(|p| Path::new(p).file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    listed.sort();
    let mut present: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    assert_eq!(listed, present);
    let stamp = |p: &Path| std::fs::metadata(p).unwrap().modified().unwrap();
    let last = stamp(&out.join("manifest.json"));
    assert!(manifest.outputs.iter().all(|p| stamp(Path::new(p)) <= last));
}

#[test]
fn failed_rerun_removes_stale_manifest() {
    let s = Sandbox::new();
    let out = s.out("o");
    assert!(mmbm(&["solve", "--grid", "5"], &s.model("m2.json", M2), &out).status.success());
    assert!(out.join("manifest.json").exists());
    let r = mmbm(&["fluid", "--eps", "5"], &s.model("m2.json", M2), &out);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.join("manifest.json").exists());
}
