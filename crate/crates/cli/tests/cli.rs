use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dampwave"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reference_hypotheses_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify-hypotheses"], &scenario("reference.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let h = json(&dir.path().join("hypotheses.json"));
    assert_eq!(h["command"], "verify-hypotheses");
    assert_eq!(h["report"]["passed"], true);
    assert!(dir.path().join("spectrum.csv").exists());
    assert!(dir.path().join("growth.json").exists());
}

#[test]
fn negative_diffusion_names_the_clause() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify-hypotheses"], &scenario("bad_coefficients.toml"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Hyp1(1)"));
    let h = json(&dir.path().join("hypotheses.json"));
    assert_eq!(h["report"]["failures"][0], "Hyp1(1)");
}

#[test]
fn attractor_commands_need_mu() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["attractor-sweep"], &scenario("no_mu.toml"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu"));
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[domain]\ngrid = 10\n").unwrap();
    assert_eq!(run(&["decay"], &bad, dir.path()).status.code(), Some(2));
    std::fs::write(&bad, "[coefficients]\na_file = \"missing.txt\"\n").unwrap();
    assert_eq!(run(&["decay"], &bad, dir.path()).status.code(), Some(2));
    assert_eq!(run(&["decay"], &dir.path().join("absent.toml"), dir.path()).status.code(), Some(2));
}

#[test]
fn linear_decay_certificate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["decay"], &scenario("linear.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&dir.path().join("certificate.json"));
    let rate = c["constants"]["rate"].as_f64().unwrap();
    assert!((rate - 0.5).abs() <= 0.01 * 0.5, "rate {rate}");
    for f in ["decay.csv", "trajectory.csv", "omega.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = Command::new(env!("CARGO_BIN_EXE_dampwave"))
        .args(["report", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(text.contains("decay") && text.contains("passed = true"));
}

#[test]
fn regularity_on_a_stationary_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["regularity"], &scenario("equilibrium.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("regularity.json"));
    assert_eq!(r["report"]["passed"], true);
    assert!(dir.path().join("voc_error.csv").exists());
}

#[test]
fn small_attractor_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        r#"
[domain]
grid_n = 32
modes_N = 8

[nonlinearity]
coefficients = [0.0, 2.0, 0.0, -1.0]
mu = 4.0
c_const = 1.0

[attractor]
ensemble = 8
epsilon_list = [1.0, 0.5, 0.25]
"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["attractor-sweep", "--seed", "5", "--threads", "1"], &cfg, out);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["attractor.json", "semidistance.csv", "attractor_eps0.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f}");
    }
    assert_eq!(json(&a.join("attractor.json"))["seed"], 5);
}
