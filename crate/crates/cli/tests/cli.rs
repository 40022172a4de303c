//! End-to-end tests of the `zcf` binary: exit-code contract, byte-level
//! determinism of the CSV reports, and the file-backed inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use zcf_core::mkdv_weyl::AnalyticConstV;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_zcf"));
    c.env_remove("ZCF_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_cfg(dir: &Path, name: &str, cfg: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn zero_cfg() -> serde_json::Value {
    serde_json::json!({
        "scenario": "free system",
        "potential": { "type": "zero", "p": 1 },
        "domain": { "x_max": 4.0, "t_max": 1.5, "nx": 8, "nt": 4 },
        "report_x": [0.5, 1.5],
        "report_t": [0.25, 0.75],
        "z_samples": [[0.3, -1.2], [-0.4, -2.0]],
        "steps_per_unit": 200
    })
}

#[test]
fn factor_check_passes_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "run.json", &zero_cfg());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = run(&["factor-check", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    assert!(stdout(&first).contains("pass"));
    let second = run(&["factor-check", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap()]);
    assert_eq!(code(&second), 0);
    let a = read(out_a.join("factor_check.csv"));
    let b = read(out_b.join("factor_check.csv"));
    assert_eq!(a, b, "identical configurations must produce identical bytes");
    assert!(a.starts_with("x,t,Re z,Im z,residual\n"));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn steps_flag_overrides_the_configured_density() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = zero_cfg();
    cfg["steps_per_unit"] = serde_json::json!(0);
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let without = run(&["factor-check", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&without), 3, "steps_per_unit = 0 must be rejected");
    let with = run(&[
        "factor-check",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--steps",
        "200",
    ]);
    assert_eq!(code(&with), 0, "the override must repair the density: {}", stderr(&with));
}

#[test]
fn tabulated_potential_that_breaks_zero_curvature_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("x,t,Re v,Im v\n");
    for i in 0..=20 {
        for j in 0..=10 {
            let (x, t) = (0.1 * i as f64, 0.1 * j as f64);
            table.push_str(&format!("{x},{t},{},0.0\n", x * t));
        }
    }
    let vpath = dir.path().join("v.csv");
    std::fs::write(&vpath, table).unwrap();
    let cfg = serde_json::json!({
        "scenario": "incompatible profile",
        "potential": { "type": "tabulated", "path": vpath, "bound": 2.0 },
        "domain": { "x_max": 2.0, "t_max": 1.0, "nx": 8, "nt": 4 },
        "report_x": [0.5, 1.5],
        "report_t": [0.5, 0.9],
        "z_samples": [[0.0, -2.5]],
        "steps_per_unit": 200
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let r = run(&["factor-check", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "stdout: {} stderr: {}", stdout(&r), stderr(&r));
    assert!(stdout(&r).contains("fail"));
    let csv = read(out.join("factor_check.csv"));
    let worst: f64 = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst > 1e-3, "the broken pair must leave a visible residual, got {worst:e}");
}

#[test]
fn weyl_evolve_zero_gap_on_the_free_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "scenario": "free weyl",
        "potential": { "type": "zero", "p": 1 },
        "z_samples": [[0.0, -2.0], [0.5, -3.0]],
        "evolve_t": 0.4
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let r = run(&["weyl-evolve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    let csv = read(out.join("weyl_evolve.csv"));
    assert!(csv.starts_with("x,t,Re z,Im z,Re direct,Im direct,Re evolved,Im evolved,gap\n"));
    for line in csv.lines().skip(1) {
        let gap: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap < 1e-12, "free-system gap must vanish, got {gap:e}");
    }
}

#[test]
fn weyl_evolve_rejects_samples_above_the_potential_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "scenario": "bad sample",
        "potential": { "type": "constant", "value": [0.3, 0.0] },
        "z_samples": [[0.0, -0.2]]
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let r = run(&["weyl-evolve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("half-plane"), "stderr: {}", stderr(&r));
}

fn assert_v_csv_close_to(path: PathBuf, want: (f64, f64), tol: f64) {
    let csv = read(path);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() > 10);
    for line in &rows[2..rows.len() - 2] {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let err = ((cells[4] - want.0).powi(2) + (cells[5] - want.1).powi(2)).sqrt();
        assert!(err < tol, "recovered value off by {err:e} at x = {}", cells[0]);
    }
}

#[test]
fn invert_recovers_a_constant_potential_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "scenario": "constant round trip",
        "potential": { "type": "constant", "value": [0.22, -0.12] },
        "invert": { "l": 1.0, "n": 40, "a_trunc": 16.0 }
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = run(&["invert", "--config", path.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    assert_v_csv_close_to(out_a.join("v.csv"), (0.22, -0.12), 2e-3);
    let eigs = read(out_a.join("sl_eigs.csv"));
    assert!(eigs.starts_with("l,min eig\n"));
    assert_eq!(eigs.lines().count(), 1 + 41);
    let second = run(&["invert", "--config", path.to_str().unwrap(), "--out", out_b.to_str().unwrap()]);
    assert_eq!(code(&second), 0);
    assert_eq!(read(out_a.join("v.csv")), read(out_b.join("v.csv")));
    assert_eq!(eigs, read(out_b.join("sl_eigs.csv")));
}

#[test]
fn invert_accepts_weyl_samples_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let cval = (0.22, -0.12);
    let provider = AnalyticConstV { c: zcf_core::linalg::c(cval.0, cval.1) };
    let margin = (cval.0 * cval.0 + cval.1 * cval.1).sqrt();
    let mut table = String::from("Re z,Im z,Re phi,Im phi\n");
    let step = 0.0125;
    let half = (16.5 / step) as i64;
    for k in -half..=half {
        let re = k as f64 * step;
        let phi = provider.phi_value(zcf_core::linalg::c(re, -0.75));
        table.push_str(&format!("{re:.16e},-0.75,{:.16e},{:.16e}\n", phi.re, phi.im));
    }
    let wpath = dir.path().join("weyl.csv");
    std::fs::write(&wpath, table).unwrap();
    let cfg = serde_json::json!({
        "scenario": "file-backed data",
        "potential": { "type": "constant", "value": [cval.0, cval.1] },
        "invert": {
            "l": 1.0,
            "n": 40,
            "a_trunc": 16.0,
            "weyl_table": { "path": wpath, "margin": margin }
        }
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let r = run(&["invert", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "stderr: {}", stderr(&r));
    assert_v_csv_close_to(out.join("v.csv"), cval, 5e-3);
}

#[test]
fn invert_rejects_an_eta_conflicting_with_the_table_contour() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = String::from("Re z,Im z,Re phi,Im phi\n");
    for k in -1400..=1400 {
        let re = 0.0125 * k as f64;
        table.push_str(&format!("{re},-0.75,0.0,0.0\n"));
    }
    let wpath = dir.path().join("weyl.csv");
    std::fs::write(&wpath, table).unwrap();
    let cfg = serde_json::json!({
        "scenario": "conflicting contour",
        "potential": { "type": "zero", "p": 1 },
        "invert": {
            "l": 1.0,
            "n": 40,
            "a_trunc": 16.0,
            "eta": -2.0,
            "weyl_table": { "path": wpath, "margin": 0.25 }
        }
    });
    let path = write_cfg(dir.path(), "run.json", &cfg);
    let out = dir.path().join("out");
    let r = run(&["invert", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("forces eta"), "stderr: {}", stderr(&r));
}

#[test]
fn gbdt_one_bump_passes_and_a_degenerate_parameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = serde_json::json!({
        "scenario": "one bump",
        "potential": {
            "type": "gbdt-soliton",
            "a1": [[[0.0, 0.7]]],
            "pi1": [[[1.0, 0.0], [2.0138276919973866, 0.0]]]
        },
        "domain": { "x_max": 8.0, "t_max": 2.0, "nx": 16, "nt": 4 },
        "report_x": [0.7, 1.6],
        "report_t": [0.3, 0.9],
        "z_samples": [[0.0, -1.3]],
        "steps_per_unit": 500
    });
    let path = write_cfg(dir.path(), "good.json", &good);
    let out = dir.path().join("out");
    let r = run(&["gbdt", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "stdout: {} stderr: {}", stdout(&r), stderr(&r));
    let report = read(out.join("gbdt_report.csv"));
    for label in ["mkdv", "identity", "dressing x", "dressing t", "zero curvature", "factorization"] {
        assert!(report.lines().any(|l| l.starts_with(label)), "missing {label} rows");
    }
    assert!(out.join("soliton_v.csv").exists());

    let degenerate = serde_json::json!({
        "scenario": "rank-deficient seed",
        "potential": {
            "type": "gbdt-soliton",
            "a1": [[[0.0, 0.9], [0.0, 0.0]], [[0.0, 0.0], [0.4, 0.6]]],
            "pi1": [[[1.0, 0.0], [0.5, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
        },
        "domain": { "x_max": 4.0, "t_max": 1.0, "nx": 8, "nt": 4 },
        "report_x": [0.5],
        "report_t": [0.5],
        "z_samples": [[0.0, -1.3]]
    });
    let path = write_cfg(dir.path(), "bad.json", &degenerate);
    let r = run(&["gbdt", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "stderr: {}", stderr(&r));
    assert!(stderr(&r).contains("det S vanishes"), "stderr: {}", stderr(&r));
}

#[test]
fn configuration_problems_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = run(&["factor-check", "--config", "/nonexistent/run.json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&missing), 3);

    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ not json").unwrap();
    let r = run(&["factor-check", "--config", garbled.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 3);

    let mut unknown = zero_cfg();
    unknown["surprise"] = serde_json::json!(1);
    let path = write_cfg(dir.path(), "unknown.json", &unknown);
    let r = run(&["factor-check", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 3);

    let no_out = write_cfg(dir.path(), "noout.json", &zero_cfg());
    let r = run(&["factor-check", "--config", no_out.to_str().unwrap()]);
    assert_eq!(code(&r), 3, "a run without any output directory must be rejected");
}

#[test]
fn thread_cap_env_var_is_validated_and_honored()  {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "run.json", &zero_cfg());
    let out = dir.path().join("out");
    let ok = bin()
        .env("ZCF_THREADS", "1")
        .args(["factor-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0, "stderr: {}", stderr(&ok));
    let bad = bin()
        .env("ZCF_THREADS", "many")
        .args(["factor-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("ZCF_THREADS"));
}
