//! End-to-end tests of the binary: exit-code contract, byte-identical
//! reproducibility across runs and worker counts, and the headline science
//! outputs of each subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_phoscat")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phoscat_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_COEFFS: &str = r#"
seed = 7
[thermostat]
gamma = 1.0
mu = 0.5
temperature = 1.0
[grid]
k_points = 48
"#;

#[test]
fn coeffs_flip_has_no_absorption_and_runs_are_byte_identical() {
    let dir = tmp("coeffs");
    let cfg = write_config(&dir, "c.toml", SMALL_COEFFS);

    let mut outputs = Vec::new();
    for (sub, workers) in [("a", "1"), ("b", "2")] {
        let out = dir.join(sub);
        let status = Command::new(bin())
            .args(["coeffs", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push((
            fs::read(out.join("coefficients.csv")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "CSV must be byte-identical");
    assert_eq!(outputs[0].1, outputs[1].1, "JSON must be byte-identical");

    let summary: serde_json::Value = serde_json::from_slice(&outputs[0].1).unwrap();
    assert_eq!(summary["p_abs"].as_f64().unwrap(), 0.0);
    assert!((summary["int_p_sc"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn coeffs_transparent_limit_and_langevin_scalars() {
    let dir = tmp("coeffs2");
    let cfg = write_config(
        &dir,
        "c.toml",
        r#"
seed = 7
[thermostat]
gamma = 1e-8
mu = 1.0
[grid]
k_points = 32
"#,
    );
    let out = dir.join("out");
    assert!(Command::new(bin())
        .args(["coeffs", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let text = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    for line in text.lines().skip(2) {
        let p_plus: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((p_plus - 1.0).abs() <= 1e-6, "transparent p_plus {p_plus}");
    }

    let cfg2 = write_config(
        &dir,
        "l.toml",
        r#"
seed = 7
[thermostat]
gamma = 1.0
mu = 1000.0
[grid]
k_points = 32
"#,
    );
    let out2 = dir.join("out2");
    assert!(Command::new(bin())
        .args(["coeffs", "--config"])
        .arg(&cfg2)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap()
        .success());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out2.join("summary.json")).unwrap()).unwrap();
    assert!(summary["p_abs"].as_f64().unwrap() >= 0.998);
    assert!(summary["int_p_sc"].as_f64().unwrap() <= 2e-3);
}

#[test]
fn identities_exit_codes() {
    let dir = tmp("identities");
    let ok = write_config(
        &dir,
        "ok.toml",
        r#"
seed = 3
[grid]
k_points = 48
[identities]
gammas = [0.5, 1.0]
mus = [0.5, 1.0, 10.0]
"#,
    );
    let status = Command::new(bin())
        .args(["identities", "--config"])
        .arg(&ok)
        .arg("--out")
        .arg(dir.join("ok"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let corrupt = write_config(
        &dir,
        "bad.toml",
        r#"
seed = 3
[grid]
k_points = 48
[identities]
gammas = [1.0]
mus = [1.0]
perturb_gamma = 0.01
"#,
    );
    let status = Command::new(bin())
        .args(["identities", "--config"])
        .arg(&corrupt)
        .arg("--out")
        .arg(dir.join("bad"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1), "corrupted Gamma must exit 1");

    let invalid = write_config(
        &dir,
        "inv.toml",
        r#"
seed = 3
[thermostat]
mu = 0.4
"#,
    );
    let status = Command::new(bin())
        .args(["coeffs", "--config"])
        .arg(&invalid)
        .arg("--out")
        .arg(dir.join("inv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "mu < 1/2 must exit 2");
}

#[test]
fn simulate_thermal_balance_and_flip_absorption() {
    let dir = tmp("simulate");
    let thermal = write_config(
        &dir,
        "thermal.toml",
        r#"
seed = 11
[thermostat]
gamma = 1.0
mu = 1.0
temperature = 1.0
[chain]
n = 256
box_len = 4.0
t_end_macro = 0.6
[ensemble]
m = 64
chunk = 8
checkpoints = 6
[simulate]
init = "zero"
"#,
    );
    let out = dir.join("thermal");
    assert!(Command::new(bin())
        .args(["simulate", "--config"])
        .arg(&thermal)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    // zero data, T = 1: energy must grow along the compensated identity
    assert!(summary["balance_z"].as_f64().unwrap().abs() <= 3.0);
    assert!(summary["final_energy"].as_f64().unwrap() > 0.0);
    for file in ["series.csv", "site_energy.csv", "spectral_energy.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    let flip = write_config(
        &dir,
        "flip.toml",
        r#"
seed = 12
[thermostat]
gamma = 1.0
mu = 0.5
temperature = 0.0
[chain]
n = 1024
box_len = 5.0
t_end_macro = 1.5
[ensemble]
m = 16
chunk = 8
checkpoints = 2
[packet]
k0 = 0.2
x0 = -0.55
sigma = 0.1
[simulate]
init = "packet"
"#,
    );
    let out2 = dir.join("flip");
    assert!(Command::new(bin())
        .args(["simulate", "--config"])
        .arg(&flip)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap()
        .success());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out2.join("summary.json")).unwrap()).unwrap();
    let absorbed = summary["fractions"]["absorbed"].as_f64().unwrap();
    assert!(
        absorbed.abs() <= 1e-10,
        "velocity flip must absorb nothing, got {absorbed}"
    );
}

#[test]
fn compare_transparent_smoke_is_exact() {
    let dir = tmp("compare");
    let cfg = write_config(
        &dir,
        "cmp.toml",
        r#"
seed = 5
[thermostat]
gamma = 0.0
mu = 1.0
temperature = 0.0
[chain]
n = 512
box_len = 5.0
t_end_macro = 1.5
[ensemble]
m = 8
chunk = 4
[packet]
k0 = 0.2
x0 = -0.55
sigma = 0.1
[compare]
spectrum_bins = 8
window_len = 32
"#,
    );
    let out = dir.join("out");
    let status = Command::new(bin())
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("compare.json")).unwrap()).unwrap();
    let t = &summary["fractions"][0];
    assert!((t["empirical"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!(t["z"].as_f64().unwrap().abs() <= 1e-3);
    assert!(summary["pass"].as_bool().unwrap());
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tmp("seed");
    let cfg = write_config(
        &dir,
        "s.toml",
        r#"
seed = 1
[thermostat]
gamma = 1.0
mu = 1.0
temperature = 1.0
[chain]
n = 256
box_len = 4.0
t_end_macro = 0.3
[ensemble]
m = 8
chunk = 4
checkpoints = 2
[simulate]
init = "thermal"
"#,
    );
    let mut energies = Vec::new();
    for seed in ["100", "200"] {
        let out = dir.join(seed);
        assert!(Command::new(bin())
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(&out)
            .status()
            .unwrap()
            .success());
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        energies.push(summary["final_energy"].as_f64().unwrap());
    }
    assert_ne!(energies[0], energies[1], "seed override must take effect");
}
