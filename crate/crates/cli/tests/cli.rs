use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "family = \"saturated_affine\"
steps = 20
particles = 200
replicas = 2
seed = 11
eps = [0.5]
diagnostics = [\"residuals\", \"energy\"]
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-filter")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn list_families_names_every_family() {
    let o = bin(&["list-families"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for f in ["linear_gaussian", "saturated_affine", "trigonometric", "uninformative", "sensor_affine"] {
        assert!(text.contains(f), "{f} missing");
    }
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.cfg", SMALL);
    assert_eq!(bin(&["validate", &ok]).status.code(), Some(0));

    let steep = write(dir.path(), "steep.cfg", "family = \"trigonometric\"\nsteps = 10\nparticles = 10\nseed = 1\n[params]\nk = 300.0\n");
    let out = dir.path().join("v");
    let o = bin(&["validate", &steep, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("hypotheses.json").is_file());

    let bad = write(dir.path(), "bad.cfg", &SMALL.replace("saturated_affine", "nonesuch"));
    let o = bin(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "config");
    assert!(v["message"].as_str().unwrap().contains("family"));

    let missing = dir.path().join("absent.cfg");
    assert_eq!(bin(&["validate", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn zero_threads_is_a_config_error() {
    assert_eq!(bin(&["--threads", "0", "list-families"]).status.code(), Some(2));
}

#[test]
fn run_then_replay_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("run");
    let o = bin(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["status"], "ok");
    for f in ["manifest.json", "report.json", "observation_r000.csv", "summary_r001.csv", "residual_ks_r000.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let manifest = out.join("manifest.json");
    let o = bin(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["status"], "ok");
    assert!(v["compared"].as_u64().unwrap() > 5);
}

#[test]
fn altered_seed_and_missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("run");
    assert_eq!(bin(&["run", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let manifest = out.join("manifest.json");
    let original = std::fs::read_to_string(&manifest).unwrap();

    let mut v: Value = serde_json::from_str(&original).unwrap();
    v["config"]["seed"] = 12.into();
    std::fs::write(&manifest, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let o = bin(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let rep = stdout_json(&o);
    assert_eq!(rep["status"], "mismatch");
    assert!(!rep["mismatches"].as_array().unwrap().is_empty());

    std::fs::write(&manifest, original).unwrap();
    std::fs::remove_file(out.join("observation_r001.csv")).unwrap();
    let o = bin(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v = stdout_json(&o);
    assert_eq!(v["kind"], "missing-input");
    assert!(v["message"].as_str().unwrap().contains("observation_r001.csv"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", &SMALL.replace("replicas = 2", "replicas = 1"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(bin(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "12"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("observation_r000.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    let m: Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 12);
}
