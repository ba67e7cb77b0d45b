use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dispflow_cli::io::sha256_hex;
use serde_json::Value;

fn dispflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dispflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const GREAT_CIRCLE: &str = r#"{
  "target": "sphere",
  "initial": "great-circle",
  "preset": "anco-myrzakulov",
  "n": 32,
  "t_end": 1e-3,
  "snap_every": 100,
  "diag_every": 50
}"#;

const RANDOM: &str = r#"{
  "target": "sphere",
  "initial": { "kind": "band-limited-random", "max_mode": 3, "amplitude": 0.2 },
  "preset": "heisenberg-biquadratic",
  "n": 32,
  "t_end": 5e-4,
  "snap_every": 100,
  "diag_every": 50
}"#;

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn presets_are_listed() {
    let out = dispflow(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with("anco-myrzakulov"))
        .expect("preset listed");
    assert!(line.contains("(-1, -1, -0.5, 0)"), "{line}");
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = dispflow(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/config.json"));
}

#[test]
fn run_without_config_is_a_usage_error() {
    assert_eq!(dispflow(&["run"]).status.code(), Some(2));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GREAT_CIRCLE.replace("\"n\"", "\"nn\""));
    let out = dispflow(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nn"));
}

#[test]
fn verify_passes() {
    let out = dispflow(&["verify", "--jobs", "1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn great_circle_run_writes_exact_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GREAT_CIRCLE);
    let out_dir = dir.path().join("out");
    let out = dispflow(&[
        "run",
        "--quiet",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let diag = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let header: Vec<&str> = diag.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == "length").unwrap();
    assert!(header.contains(&"N_4"));
    for row in diag.lines().skip(1) {
        let length: f64 = row.split(',').nth(col).unwrap().parse().unwrap();
        assert!((length - std::f64::consts::TAU).abs() <= 1e-13, "{length}");
    }

    let m = manifest(&out_dir);
    assert_eq!(m["status"], "ok");
    let outputs = m["outputs"].as_object().unwrap();
    let snaps: Vec<&String> = outputs
        .keys()
        .filter(|k| k.starts_with("snapshots/"))
        .collect();
    assert!(!snaps.is_empty());
    for (name, hash) in outputs {
        let bytes = fs::read(out_dir.join(name)).unwrap();
        assert_eq!(hash.as_str().unwrap(), sha256_hex(&bytes), "{name}");
    }
    let snap = fs::read_to_string(out_dir.join(snaps[0])).unwrap();
    assert_eq!(snap.lines().count(), 1 + 32);
}

#[test]
fn manifest_is_reproducible_and_tracks_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RANDOM);
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec![
            "run",
            "--quiet",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert!(dispflow(&args).status.success());
        fs::read(out_dir.join("manifest.json")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "7"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
