use std::path::Path;
use std::process::{Command, Output};

use heisenberg_cli::report::{Report, Status};

fn heis(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heis"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn heis")
}

fn report(dir: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn unknown_suite_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["verify", "--suite", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn unknown_tolerance_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["verify", "--set", "tolerance.not_a_check=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn skipped_checks_are_rows_and_do_not_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["verify", "--suite", "core", "--set", "skip=[\"group_inverse\"]", "--format", "both"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r.checks.len(), 5);
    let skipped: Vec<_> = r.checks.iter().filter(|c| c.status == Status::Skipped).collect();
    assert_eq!(skipped.len(), 1);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.contains("group_inverse,Heisenberg group law,NaN,NaN,skipped"));
}

#[test]
fn failing_tolerance_gives_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["verify", "--suite", "core", "--set", "tolerance.dilation_homomorphism=0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    assert!(!r.pass);
    assert!(r.checks.iter().any(|c| c.name == "dilation_homomorphism" && c.status == Status::Fail));
}

#[test]
fn flags_override_set_which_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("heis.toml");
    std::fs::write(&cfg, "seed = 3\nsuite = [\"ordercalc\"]\n[quadrature]\nn_theta = 32\n").unwrap();
    let out = dir.path().join("out");
    let o = heis(
        &["verify", "--config", cfg.to_str().unwrap(), "--set", "seed=4", "--set", "quadrature.n_theta=40", "--seed", "5"],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r.config["seed"], 5);
    assert_eq!(r.config["quadrature.n_theta"], 40);
    assert!(r.checks.iter().all(|c| c.suite == "ordercalc"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = heis(&["verify", "--suite", "ordercalc"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn report_survives_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    heis(&["verify", "--suite", "core,ordercalc", "--seed", "11"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let r = Report::from_json(&text).unwrap();
    assert_eq!(r.to_json(), text);
    assert_eq!(r.suites.len(), 2);
}

#[test]
fn cn_prints_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["cn", "--resolution-scale", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cn.json")).unwrap()).unwrap();
    assert!((v["cn"].as_f64().unwrap() - 8.0).abs() < 1e-8);
}

#[test]
fn orders_writes_both_rules() {
    let dir = tempfile::tempdir().unwrap();
    let o = heis(&["orders", "--format", "both"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for f in ["orders.json", "orders_anisotropic.csv", "orders_strict.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("orders_anisotropic.csv")).unwrap();
    assert_eq!(csv.lines().count(), 82);
}
