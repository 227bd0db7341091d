mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plate_homog::app::{EnergyReport, OracleReport, OscillationReport, ReduceReport};
use plate_homog::report::EffectiveReport;
use serde_json::Value;

use common::fixture;

fn plate_homog(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plate-homog"));
    cmd.args(args).env_remove("PLATE_HOMOG_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(command: &str, spec: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    plate_homog(&args, &[])
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn bending_on_homogeneous_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("bending", &fixture("homogeneous.json"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: EffectiveReport = read(&dir.path().join("report.json"));
    assert_eq!(r.convention, "mandel-sqrt2");
    assert!((r.q0.matrix() - nalgebra::Matrix3::identity() * (2.0 / 12.0)).abs().max() < 1e-15);
    assert_eq!(r.optimal_b_matrix(), nalgebra::Matrix3::zeros());
    let settings = r.settings.expect("settings block");
    assert_eq!(settings.command, "bending");
    assert!(settings.spec.unwrap().ends_with("homogeneous.json"));
}

#[test]
fn bilayer_fixture_gives_13_96() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("bending", &fixture("bilayer.json"), dir.path(), &[]).status.success());
    let r: EffectiveReport = read(&dir.path().join("report.json"));
    assert!((r.q0.matrix() - nalgebra::Matrix3::identity() * (13.0 / 96.0)).abs().max() < 1e-15);
    // B*(A) = −M₀⁻¹M₁A with M₀ = 2, M₁ = 1/4
    assert!((r.optimal_b_matrix()[(0, 0)] + 0.125).abs() < 1e-15);
}

#[test]
fn report_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, spec) in [("homog-regime1", "cell.json"), ("homog-regime2", "slab.json"), ("bending", "bilayer.json")] {
        let sub = dir.path().join(cmd);
        assert!(run(cmd, &fixture(spec), &sub, &[]).status.success());
        let text = fs::read_to_string(sub.join("report.json")).unwrap();
        let r: EffectiveReport = serde_json::from_str(&text).unwrap();
        let again: EffectiveReport = serde_json::from_str(&serde_json::to_string_pretty(&r).unwrap()).unwrap();
        assert_eq!(r, again);
        for (a, b) in r.q0.matrix().iter().zip(again.q0.matrix().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(serde_json::to_string_pretty(&again).unwrap() + "\n", text);
    }
}

#[test]
fn regimes_agree_on_fiber_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert!(run("homog-regime1", &fixture("fiber.json"), &d1, &[]).status.success());
    assert!(run("homog-regime2", &fixture("fiber.json"), &d2, &["--grid", "2,1,1"]).status.success());
    let r1: EffectiveReport = read(&d1.join("report.json"));
    let r2: EffectiveReport = read(&d2.join("report.json"));
    let diff = (r1.q0.matrix() - r2.q0.matrix()).norm() / r1.q0.matrix().norm();
    assert!(diff < 1e-8, "{diff}");
    assert_eq!(r2.settings.unwrap().grid, Some(vec![2, 1, 1]));
}

#[test]
fn oscillate_writes_decreasing_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("oscillate", &fixture("oscillating.json"), dir.path(), &[]).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("oscillate.csv")).unwrap();
    let distances: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(distances.len(), 6);
    assert!(distances.windows(2).all(|w| w[1] <= w[0]));
    let report: OscillationReport = read(&dir.path().join("oscillate.json"));
    assert_eq!(report.rows.len(), 6);
}

#[test]
fn other_commands_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run("reduce", &fixture("fiber.json"), &p.join("reduce"), &[]).status.success());
    let r: ReduceReport = read(&p.join("reduce/reduce.json"));
    assert!(r.fiber_reduced.is_some());

    assert!(run("oracle-check", &fixture("cell.json"), &p.join("oracle"), &["--quadrature", "4"]).status.success());
    let o: OracleReport = read(&p.join("oracle/oracle.json"));
    assert!(o.passed && o.regime == 1 && o.settings.quadrature == Some(4));

    assert!(run("energy", &fixture("energy.json"), &p.join("energy"), &[]).status.success());
    let e: EnergyReport = read(&p.join("energy/energy.json"));
    assert!((e.energy - 1.0 / 6.0).abs() < 1e-15);

    assert!(run("sweep", &fixture("sweep.json"), &p.join("sweep"), &[]).status.success());
    let mut rdr = csv::Reader::from_path(p.join("sweep/sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[2] == "ok"));
    assert!(p.join("sweep/contrast-9/report.json").exists());
}

#[test]
fn thread_cap_is_honoured_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("cell.json");
    let args = ["homog-regime1", "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    let ok = plate_homog(&args, &[("PLATE_HOMOG_THREADS", "1")]);
    assert!(ok.status.success());
    let bad = plate_homog(&args, &[("PLATE_HOMOG_THREADS", "many")]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stderr_json(&bad)["field"], "PLATE_HOMOG_THREADS");
}

#[test]
fn parse_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let broken = write_spec(p, "broken.json", "{ not json");
    let out = run("bending", &broken, &p.join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let untagged = write_spec(p, "untagged.json", r#"{ "bounds": { "eta1": 1, "eta2": 2 } }"#);
    let out = run("bending", &untagged, &p.join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "convention");

    let voigt = write_spec(p, "voigt.json", r#"{ "convention": "voigt" }"#);
    let out = run("bending", &voigt, &p.join("o"), &[]);
    assert_eq!(stderr_json(&out)["found"], "voigt");

    let typo = write_spec(
        p,
        "typo.json",
        r#"{ "convention": "mandel-sqrt2", "bounds": { "eta1": 1, "eta2": 2, "eta3": 4 } }"#,
    );
    let out = run("bending", &typo, &p.join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let v = stderr_json(&out);
    assert_eq!(v["field"], "bounds.eta3");
    assert!(v["message"].as_str().unwrap().contains("eta3"));

    let wrong = run("oscillate", &fixture("cell.json"), &p.join("o"), &[]);
    assert_eq!(wrong.status.code(), Some(2));
    assert_eq!(stderr_json(&wrong)["field"], "material.type");

    let usage = plate_homog(&["bend", "--spec", "x"], &[]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(stderr_json(&usage)["error"], "parse");
}

#[test]
fn admissibility_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let degenerate = write_spec(
        p,
        "eta0.json",
        r#"{ "convention": "mandel-sqrt2", "bounds": { "eta1": 0.0, "eta2": 2.0 },
             "material": { "type": "homogeneous", "form": { "mu": 1.0, "lambda": 0.0 } } }"#,
    );
    let out = run("bending", &degenerate, &p.join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));

    let stiff = write_spec(
        p,
        "stiff.json",
        r#"{ "convention": "mandel-sqrt2", "bounds": { "eta1": 1.0, "eta2": 3.0 },
             "material": { "type": "fiber", "forms": [{ "scalar": 2.0 }, { "scalar": 5.0 }] } }"#,
    );
    let out = run("reduce", &stiff, &p.join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "admissibility");
    assert_eq!(v["sample"], 1);
}

#[test]
fn solver_failure_exits_4_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let spec = write_spec(
        p,
        "capped.json",
        r#"{ "convention": "mandel-sqrt2", "bounds": { "eta1": 2.0, "eta2": 12.5 },
             "material": { "type": "cell", "grid": [2, 2, 2],
                           "phases": [{ "mu": 1.0, "lambda": 0.5 }, { "mu": 2.5, "lambda": 1.5 }],
                           "cells": [0, 0, 1, 0, 1, 1, 1, 0] },
             "settings": { "max_iterations": 1 } }"#,
    );
    let out = run("homog-regime1", &spec, &p.join("o"), &["--tol", "1e-14", "--grid", "4,4,4"]);
    assert_eq!(out.status.code(), Some(4));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "solver-not-converged");
    assert_eq!(v["residuals"].as_array().unwrap().len(), 2);
}

#[test]
fn oversized_oracle_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("oracle-check", &fixture("cell.json"), dir.path(), &["--grid", "10,10,10", "--tol", "1e-8"]);
    assert_eq!(out.status.code(), Some(5));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "size-cap");
    assert_eq!(v["cap"], 20_000);
}

#[test]
fn bad_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("homog-regime1", &fixture("cell.json"), dir.path(), &["--grid", "3,3,3"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run("homog-regime1", &fixture("cell.json"), dir.path(), &["--grid", "2,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_fixtures_deserialize() {
    let out = |name: &str| fixture(&format!("outputs/{name}"));
    for name in ["report.json", "report-regime2.json"] {
        let r: EffectiveReport = read(&out(name));
        assert_eq!(r.convention, "mandel-sqrt2");
    }
    let _: ReduceReport = read(&out("reduce.json"));
    let _: OscillationReport = read(&out("oscillate.json"));
    let o: OracleReport = read(&out("oracle.json"));
    assert!(o.passed);
    let _: EnergyReport = read(&out("energy.json"));
    let e: Value = read(&out("error.json"));
    assert_eq!(e["exit_code"], 2);
    for (name, width) in [("oscillate.csv", 8), ("sweep.csv", 11)] {
        let mut rdr = csv::Reader::from_path(out(name)).unwrap();
        assert_eq!(rdr.headers().unwrap().len(), width);
        assert!(rdr.records().all(|r| r.unwrap().len() == width));
    }
}
