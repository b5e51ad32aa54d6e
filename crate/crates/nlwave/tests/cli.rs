use std::path::Path;
use std::process::{Command, Output};

use nlwave::io::{write_json, TraceFile, TRACE_FORMAT};

fn nlwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlwave"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("NLWAVE_THREADS")
        .output()
        .expect("binary runs")
}

fn trace(values: Vec<f64>, s0: f64, ds: f64) -> TraceFile {
    TraceFile {
        format: TRACE_FORMAT.into(),
        h: 0.01,
        t_exit: 1.4,
        s0,
        ds,
        delta: 0.566,
        values,
    }
}

#[test]
fn extract_reads_a_single_mode_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (h, t, k, a) = (0.01, 1.4, 3usize, 0.37);
    let (s0, ds, n) = (t - 0.7, h / 16.0, 2241);
    let s = |i: usize| s0 + i as f64 * ds;
    let linear: Vec<f64> = (0..n)
        .map(|i| ((s(i) - t) / h).sin() * (-(s(i) - t).powi(2) / 0.02).exp())
        .collect();
    let full: Vec<f64> = (0..n)
        .map(|i| {
            let env = (-(s(i) - t).powi(2) / 0.08).exp();
            linear[i] + h * a * env * (k as f64 * (s(i) - t) / h).sin()
        })
        .collect();
    write_json(&dir.path().join("trace.json"), &trace(full, s0, ds)).unwrap();
    write_json(&dir.path().join("linear.json"), &trace(linear, s0, ds)).unwrap();
    let trace_path = dir.path().join("trace.json");
    let linear_path = dir.path().join("linear.json");
    let out = nlwave(
        dir.path(),
        &[
            "extract",
            "--trace",
            trace_path.to_str().unwrap(),
            "--linear",
            linear_path.to_str().unwrap(),
            "--k",
            "3",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["a_k", "a_k_band"] {
        let got = v[key].as_f64().unwrap();
        assert!((got - a).abs() < 0.01 * a, "{key}: {got}");
    }
    assert!(dir.path().join("extract.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "extract");
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwave(
        dir.path(),
        &["crosscut", "--field", "missing", "--axis", "x", "--at", "0"],
    );
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "io");

    let out = nlwave(dir.path(), &["recover", "--mode", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "usage");

    let out = nlwave(dir.path(), &["--help"]);
    assert!(out.status.success());
}

#[test]
fn preset_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwave(
        dir.path(),
        &["preset", "--name", "poly5_real", "--scale", "paper"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let c = nlwave::config::ConfigFile::load(&dir.path().join("poly5_real.json")).unwrap();
    assert_eq!(c.probe.h, 0.005);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], c.hash());
}

#[test]
fn radon_forward_and_invert_through_files() {
    use nlwave_core::model::{FieldData, Grid2D, ScalarField2D};
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid2D::square(65, 0.5).unwrap();
    let data = (0..grid.len())
        .map(|n| {
            let (x, y) = (grid.x(n % grid.nx), grid.y(n / grid.nx));
            (1.0 - (x * x + y * y) / 0.16).max(0.0).powi(3)
        })
        .collect();
    let f = ScalarField2D::new(grid, FieldData::Real(data)).unwrap();
    nlwave::io::write_field(&dir.path().join("g"), &f, None).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = nlwave(
        dir.path(),
        &[
            "radon",
            "forward",
            "--in",
            &format!("{d}/g"),
            "--out",
            "sino",
            "--angles",
            "90",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = nlwave(
        dir.path(),
        &[
            "radon",
            "invert",
            "--in",
            &format!("{d}/sino.bin"),
            "--out",
            "back",
            "--n",
            "65",
            "--half",
            "0.5",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (back, _) = nlwave::io::read_field(&dir.path().join("back")).unwrap();
    let c = back.at(32, 32).re;
    assert!((c - 1.0).abs() < 0.05, "{c}");
}
