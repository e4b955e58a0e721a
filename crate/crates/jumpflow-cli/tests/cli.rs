//! End-to-end runs of the `jumpflow` binary.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_jumpflow");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, threads: usize) -> std::process::Output {
    Command::new(BIN)
        .args(["run", config.to_str().unwrap(), "--threads", &threads.to_string(), "--out", out.to_str().unwrap()])
        .env_remove("JUMPFLOW_OUT")
        .output()
        .unwrap()
}

const KINETIC_UH: &str = r#"
task = "check-uh"
[system]
family = "kinetic"
dim = 2
[levy]
alpha = 1.0
delta = 1.0
[sim]
t_end = 1.0
n_paths = 1
seed = 0
[task_params]
j0 = 2
grid = { lo = [-1.0, -1.0], hi = [1.0, 1.0], spacing = 0.5 }
"#;

#[test]
fn check_uh_on_the_kinetic_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "uh.toml", KINETIC_UH);
    let out = dir.path().join("out");
    let o = run(&cfg, &out, 1);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("check-uh.json")).unwrap()).unwrap();
    assert!((v["c0"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert_eq!(v["convention"], "NABLA_B_LEFT");
    assert_eq!(v["witness_x"].as_array().unwrap().len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], v["config_hash"]);
    assert!(manifest["versions"]["jumpflow"].is_string());
}

#[test]
fn missing_field_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &KINETIC_UH.replace("alpha = 1.0\n", ""));
    let o = run(&cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("levy") && err.contains("alpha"), "{err}");
}

#[test]
fn out_of_range_parameter_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &KINETIC_UH.replace("alpha = 1.0", "alpha = 2.5"));
    assert_eq!(run(&cfg, &dir.path().join("out"), 1).status.code(), Some(2));
}

#[test]
fn degenerate_density_exits_with_numerics_code() {
    let text = r#"
task = "density"
[system]
family = "additive"
dim = 1
[levy]
alpha = 1.0
delta = 1.0
silent = true
[sim]
t_end = 0.5
n_paths = 100
seed = 1
[task_params]
t = 0.5
x0 = [0.0]
"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", text);
    let o = run(&cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

const OPERATOR: &str = r#"
task = "apply-operator"
output = "unused"
[system]
family = "additive"
dim = 1
[levy]
alpha = 1.0
delta = 1.0
profile = "hard"
radius = 1.0
trunc_low = 0.0
[sim]
t_end = 1.0
n_paths = 1
seed = 3
[task_params]
operator = "small-jump"
function = { kind = "quadratic", q = [1.0] }
grid = { lo = [-1.0], hi = [1.0], spacing = 0.5 }
"#;

#[test]
fn apply_operator_writes_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "op.toml", OPERATOR);
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 2).status.success());
    let csv = std::fs::read_to_string(out.join("apply-operator.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,value"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r[1] - 2.0).abs() < 1e-8, "{r:?}");
    }
}

#[test]
fn environment_overrides_configured_output_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "op.toml", OPERATOR);
    let env_out = dir.path().join("from-env");
    let o = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap(), "--threads", "1"])
        .env("JUMPFLOW_OUT", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("apply-operator.csv").exists());
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn repeated_runs_are_byte_identical_across_threads() {
    let text = r#"
task = "simulate"
[system]
family = "sine"
dim = 1
[levy]
alpha = 1.0
delta = 1.0
trunc_low = 0.02
[sim]
t_end = 1.0
n_paths = 600
seed = 5
[task_params]
x0 = [0.4]
jacobians = true
"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.toml", text);
    let mut outputs = Vec::new();
    for threads in [1, 3, 1] {
        let out = dir.path().join(format!("o{}", outputs.len()));
        assert!(run(&cfg, &out, threads).status.success());
        outputs.push(std::fs::read(out.join("simulate.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}
