use std::path::Path;
use std::process::{Command, Output};

fn horst(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horst"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const CONFIG: &str = r#"{
  "survey": {
    "base": { "dims": [18, 18, 12], "h": 50.0, "water_cells": 2, "v_seabed": 1900.0, "gradient": 0.5 },
    "margin": 150.0,
    "node_pitch": 250.0,
    "shot_pitch": [100.0, 100.0],
    "shot_depth": 25.0,
    "anomalies": [{ "center": [425.0, 425.0, 350.0], "radius": 90.0, "amplitude": 0.05 }]
  },
  "paths": {
    "model": "out/start_model.fdm",
    "true_model": "out/true_model.fdm",
    "acquisition": "out/acquisition.json",
    "dataset": "out/dataset.fdg"
  },
  "plan": { "frequencies": [2.0, 3.0], "h": 50.0, "max_iter": 2 },
  "physics": { "pml_width": 0, "time_damping": 1.0 }
}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    dir
}

#[test]
fn pipeline_is_deterministic_end_to_end() {
    let dir = setup();
    let d = dir.path();
    let out = horst(d, &["--config", "run.json", "survey", "--set", "paths.model=null"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = horst(d, &["--config", "run.json", "--deterministic", "forward"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(d.join("out/dataset.fdg")).unwrap();
    let out = horst(d, &["--config", "run.json", "--deterministic", "forward"]);
    assert_eq!(code(&out), 0);
    assert_eq!(first, std::fs::read(d.join("out/dataset.fdg")).unwrap());

    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = horst(d, &["invert", "--config", "run.json", "--deterministic", "--threads", "1"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        runs.push((
            std::fs::read(d.join("out/history.csv")).unwrap(),
            std::fs::read(d.join("out/model_final.fdm")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
    let history = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(history.starts_with("cycle,stage,freq_hz,iter,J,grad_norm,step_len,n_facto,wall_s"));
    assert!(history.lines().skip(1).all(|l| l.ends_with(",0.0")), "{history}");
    assert!(d.join("out/model_c0_s1.fdm").exists());

    let out = horst(
        d,
        &["slice", "--set", "paths.model=out/model_final.fdm", "--set", "slice.axis=y", "--set", "slice.index=8", "--set", "slice.overlay=true"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = setup();
    let out = horst(dir.path(), &["--config", "run.json", "--set", "plan.bogus=1", "forward"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan.bogus"));
    let out = horst(dir.path(), &["forward", "--set", "inversion.v_min=7000", "--set", "inversion.v_max=6000"]);
    assert_eq!(code(&out), 2);
    let out = horst(dir.path(), &["no-such-command"]);
    assert_eq!(code(&out), 2);
    let out = horst(dir.path(), &["--threads", "x", "weights"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn io_and_format_errors_exit_with_four() {
    let dir = setup();
    let d = dir.path();
    let out = horst(d, &["--config", "missing.json", "weights"]);
    assert_eq!(code(&out), 4);
    std::fs::create_dir_all(d.join("out")).unwrap();
    std::fs::write(d.join("out/start_model.fdm"), b"not a model").unwrap();
    let out = horst(d, &["--config", "run.json", "slice"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn undersampled_grid_exits_with_three() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&horst(d, &["--config", "run.json", "survey", "--set", "paths.model=null"])), 0);
    let out = horst(d, &["--config", "run.json", "--set", "plan.frequencies=[12.0]", "forward"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
