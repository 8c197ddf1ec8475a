//! Black-box tests of the `otmech` binary: exit codes, report
//! determinism, and the plot artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otmech"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const EXP_2_1: &str = "
[[items]]
family = \"exponential\"
rate = 2.0

[[items]]
family = \"exponential\"
rate = 1.0
";

const POWERLAW_6_7: &str = "
[[items]]
family = \"powerlaw\"
shape = 6.0

[[items]]
family = \"powerlaw\"
shape = 7.0
";

const BETA: &str = "
[[items]]
family = \"beta\"
a = 3.0
b = 3.0

[[items]]
family = \"beta\"
a = 3.0
b = 4.0
";

#[test]
fn solve_reports_the_exponential_menu() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", EXP_2_1);
    let out = otmech(&["solve", "--spec", &spec, "--mc-samples", "20000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pipeline = exponential closed form"));
    assert!(text.contains("q = (1.000000000000e0, 5.000000000000e-1), t = 1.000000000000e0"));
    assert!(text.contains("quadrature ="));
    assert!(text.contains("monte_carlo ="));
    assert!(text.contains("difference ="));
}

#[test]
fn reports_are_byte_identical_for_identical_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "exp.toml", EXP_2_1);
    let args = ["solve", "--spec", &spec, "--seed", "99", "--mc-samples", "20000"];
    let first = otmech(&args);
    let second = otmech(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn certify_bundle_accepts_powerlaw_and_rejects_asymmetric_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let pl = write_spec(dir.path(), "pl.toml", POWERLAW_6_7);
    let out = otmech(&["certify-bundle", "--spec", &pl]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("valid = true"));

    // bundling is not optimal here, so certification is inconclusive
    let exp = write_spec(dir.path(), "exp.toml", EXP_2_1);
    let out = otmech(&["certify-bundle", "--spec", &exp]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("inconclusive"));
}

#[test]
fn invalid_parameters_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_spec(
        dir.path(),
        "bad.toml",
        "[[items]]\nfamily = \"beta\"\na = 1.0\nb = 2.0\n\n[[items]]\nfamily = \"beta\"\na = 2.0\nb = 2.0\n",
    );
    let out = otmech(&["solve", "--spec", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8(out.stderr).unwrap().is_empty());
}

#[test]
fn validate_writes_a_report_but_no_plot_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "pl.toml", POWERLAW_6_7);
    let outdir = dir.path().join("out");
    let out = otmech(&["validate", "--spec", &spec, "--out", outdir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(outdir.join("report.txt").exists());
    assert!(!outdir.join("menu.json").exists());
    assert!(!outdir.join("regions.csv").exists());
}

#[test]
fn plot_on_exponential_marks_only_buy_and_no_buy_regions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "exp11.toml",
        "
[[items]]
family = \"exponential\"
rate = 1.0

[[items]]
family = \"exponential\"
rate = 1.0
",
    );
    let outdir = dir.path().join("out");
    let out = otmech(&[
        "plot",
        "--spec",
        &spec,
        "--out",
        outdir.to_str().unwrap(),
        "--mc-samples",
        "1000",
    ]);
    assert!(out.status.success());
    let regions = fs::read_to_string(outdir.join("regions.csv")).unwrap();
    let labels: std::collections::BTreeSet<&str> = regions
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert!(labels.contains("Z") && labels.contains("W"));
    assert!(!labels.contains("A") && !labels.contains("B"));
    let menu: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("menu.json")).unwrap()).unwrap();
    assert_eq!(menu["options"].as_array().unwrap().len(), 2);
}

#[test]
fn plot_on_beta_emits_the_boundary_curves() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "beta.toml", BETA);
    let outdir = dir.path().join("out");
    let out = otmech(&[
        "plot",
        "--spec",
        &spec,
        "--out",
        outdir.to_str().unwrap(),
        "--mc-samples",
        "1000",
    ]);
    assert!(out.status.success());
    let curves = fs::read_to_string(outdir.join("curves.csv")).unwrap();
    let mut best: Option<(f64, f64)> = None;
    for line in curves.lines().skip(1) {
        let mut cols = line.split(',');
        let z1: f64 = cols.next().unwrap().parse().unwrap();
        let s = cols.next().unwrap();
        if s.is_empty() {
            continue;
        }
        let s: f64 = s.parse().unwrap();
        if best.map_or(true, |(bz, _)| (z1 - 0.16016).abs() < (bz - 0.16016).abs()) {
            best = Some((z1, s));
        }
    }
    let (_, s) = best.expect("curve rows");
    assert!((s - 0.55291).abs() < 1e-3, "s {s}");
    // all four region labels appear for the lottery continuum
    let regions = fs::read_to_string(outdir.join("regions.csv")).unwrap();
    for label in ["Z", "A", "B", "W"] {
        assert!(
            regions.lines().skip(1).any(|l| l.split(',').nth(2) == Some(label)),
            "missing region {label}"
        );
    }
    let menu: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("menu.json")).unwrap()).unwrap();
    assert!(menu["options"].as_array().unwrap().len() >= 50);
    assert!((menu["p_star"].as_f64().unwrap() - 0.71307).abs() < 1e-3);
}

#[test]
fn oracle_solves_a_discrete_instance_from_the_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "grid.toml",
        "[discrete]\ntypes = [[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [2.0, 2.0]]\n",
    );
    let out = otmech(&["oracle", "--spec", &spec]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("grid_lp_revenue = 2.250000000000e0"));
}
