//! End-to-end checks of the `qsltraj` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qsltraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsltraj"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    qsltraj(&all)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TRAJ: &[&str] = &["trajectory", "--omega", "1", "--kappa", "0.25", "--tau", "1", "--dt", "1e-3", "--seed", "7"];

#[test]
fn trajectory_dump_has_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), TRAJ);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x,y,z,F,dW");
    assert_eq!(lines.len() - 1, 1001);
    assert!(lines[1001].ends_with(','), "dW is empty on the last row");
    let first: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first[4], 1.0);
    let meta = json(&dir.path().join("trajectory.json"));
    assert_eq!(meta["config"]["params"]["seed"], 7);
}

#[test]
fn repeated_runs_write_identical_files() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run_in(d.path(), TRAJ)), 0);
    }
    for f in ["trajectory.csv", "trajectory.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_parameters_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["trajectory", "--kappa", "-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kappa"), "{}", stderr(&o));

    let o = run_in(dir.path(), &["ensemble", "--n-traj", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_traj"));

    let o = run_in(dir.path(), &["ensemble", "--workers", "0"]);
    assert_eq!(code(&o), 2);

    let o = run_in(dir.path(), &["trajectory", "--initial", "0.5,0,0"]);
    assert_eq!(code(&o), 2, "initial state must be pure");

    let o = run_in(dir.path(), &["sweep", "--kappas", ""]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kappas"));

    for t in ["0", "-0.3", "2"] {
        let o = run_in(dir.path(), &["passage", "--target-angle", t]);
        assert_eq!(code(&o), 2, "target {t}");
    }
    // Nothing was written by the rejected runs.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&qsltraj(&["ensemble", "--no-such-flag"])), 2);
    assert_eq!(code(&qsltraj(&["frobnicate"])), 2);
}

const SMALL: &[&str] = &["ensemble", "--n-traj", "300", "--kappa", "0.25", "--tau", "1"];

#[test]
fn ensemble_outputs_do_not_depend_on_workers() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut one = SMALL.to_vec();
    one.extend(["--workers", "1"]);
    let mut eight = SMALL.to_vec();
    eight.extend(["--workers", "8"]);
    assert_eq!(code(&run_in(a.path(), &one)), 0);
    assert_eq!(code(&run_in(b.path(), &eight)), 0);
    for f in ["stats.json", "ensemble.csv", "histogram.csv", "colormap.csv", "curves.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ensemble_stats_schema() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), SMALL);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats = json(&dir.path().join("stats.json"));
    for key in [
        "v_ensemble", "v_qsl", "tau_qsl_angle", "tau_qsl_ratio", "tau_qsl_bound", "mean_vc",
        "var_vc_sample", "var_vc_formula", "violation_fraction", "config",
    ] {
        assert!(stats.get(key).is_some(), "missing {key}");
    }
    let rows = fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    assert_eq!(rows.lines().count(), 301);
    assert!(rows.starts_with("traj_id,v_c,bures_final,passage_time,f_final\n"));
    // The reported fraction is the exact count over the per-trajectory rows.
    let v_qsl = stats["v_qsl"].as_f64().unwrap();
    let above = rows
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() > v_qsl)
        .count();
    assert_eq!(stats["violation_fraction"].as_f64().unwrap(), above as f64 / 300.0);
    let colormap = fs::read_to_string(dir.path().join("colormap.csv")).unwrap();
    assert!(colormap.starts_with("t,f_bin_left,f_bin_right,density\n"));
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves.starts_with("t,f_ensemble,f_qsl,"));
}

#[test]
fn existing_outputs_are_not_overwritten() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_in(dir.path(), TRAJ)), 0);
    let before = fs::read(dir.path().join("trajectory.csv")).unwrap();
    let mut other: Vec<&str> = TRAJ.iter().map(|a| if *a == "0.25" { "0.5" } else { a }).collect();
    let o = run_in(dir.path(), &other);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--overwrite"));
    assert_eq!(fs::read(dir.path().join("trajectory.csv")).unwrap(), before);
    other.push("--overwrite");
    assert_eq!(code(&run_in(dir.path(), &other)), 0);
    assert_ne!(fs::read(dir.path().join("trajectory.csv")).unwrap(), before);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# test run\nkappa = 0.5\nn-traj = 120\ntau = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = qsltraj(&[
        "ensemble", "--config", cfg.to_str().unwrap(), "--kappa", "0.1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = &json(&out.join("stats.json"))["config"]["params"];
    assert_eq!(p["kappa"], 0.1);
    assert_eq!(p["n_traj"], 120);
    assert_eq!(p["tau"], 2.0);
    assert_eq!(p["omega"], 1.0);

    fs::write(&cfg, "kapa = 0.5\n").unwrap();
    assert_eq!(code(&qsltraj(&["ensemble", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn sweep_outputs() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["sweep", "--kappas", "0.25, 0.05,0.1", "--n-traj", "400"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let kappas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(kappas, vec![0.05, 0.1, 0.25]);
    let sweep = json(&dir.path().join("sweep.json"));
    assert!(sweep["std_vc_increasing"].is_boolean());
    assert_eq!(sweep["config"]["kappas"], serde_json::json!([0.25, 0.05, 0.1]));
}

#[test]
fn unitary_passage_is_a_single_cell() {
    let dir = TempDir::new().unwrap();
    let o = run_in(
        dir.path(),
        &["passage", "--kappa", "0", "--initial", "0,0,1", "--n-traj", "20", "--tau", "3"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hist = fs::read_to_string(dir.path().join("passage_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 2);
    let p = json(&dir.path().join("passage.json"));
    assert_eq!(p["passage"]["reached"], 20);
    assert_eq!(p["config"]["target_angle"], std::f64::consts::FRAC_PI_4);
}

fn validation(dir: &Path, extra: &[&str]) -> (i32, Value, String) {
    let mut args = vec!["validate", "--n-traj", "2000"];
    args.extend(extra);
    let o = run_in(dir, &args);
    let report = json(&dir.join("validation.json"));
    (code(&o), report, String::from_utf8_lossy(&o.stdout).into_owned())
}

fn failed_checks(report: &Value) -> Vec<String> {
    report["report"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn validate_passes_on_defaults() {
    let dir = TempDir::new().unwrap();
    let (status, report, stdout) = validation(dir.path(), &[]);
    assert_eq!(status, 0, "{stdout}");
    let checks = report["report"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 15);
    for c in checks {
        assert!(c.get("measured").is_some() && c.get("expected").is_some());
    }
    assert_eq!(stdout.lines().count(), checks.len());
}

#[test]
fn sign_fault_is_caught() {
    let dir = TempDir::new().unwrap();
    let (status, report, _) = validation(dir.path(), &["--inject-fault", "diffusion-sign"]);
    assert_eq!(status, 4);
    let failed = failed_checks(&report);
    assert!(failed.contains(&"diffusion_matches_innovation".to_string()), "{failed:?}");
    assert!(failed.contains(&"projection_remainder_order".to_string()), "{failed:?}");
}

#[test]
fn scale_fault_is_caught_by_diffusivity() {
    let dir = TempDir::new().unwrap();
    let (status, report, _) = validation(dir.path(), &["--inject-fault", "diffusion-scale"]);
    assert_eq!(status, 4);
    let failed = failed_checks(&report);
    assert!(failed.iter().any(|n| n.starts_with("diffusivity_z_")), "{failed:?}");
}
