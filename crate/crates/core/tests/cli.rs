use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hjhomog(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hjhomog"));
    cmd.args(args).env_remove("HJHOMOG_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![kind, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hjhomog(&args, &[])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const TWO_COERCIVE: &str = r#"
[spec]
space_dims = 1
[[spec.terms]]
kind = "coercive"
a = { mean = 1.0 }
exponent = 1.0
[[spec.terms]]
kind = "coercive"
a = { mean = 2.0 }
exponent = 1.0
"#;

#[test]
fn verify_reports_structure_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = run("verify", &configs().join("intro_verify.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let a = &r["result"]["assumptions"];
    for key in ["c0", "c1", "c2", "c3", "c4", "c5", "l", "coercive_ok", "lipschitz_ok", "samples_used"] {
        assert!(!a[key].is_null(), "missing {key}");
    }
    assert_eq!(a["c0"].as_f64(), Some(2.0));
    assert_eq!(r["config"]["experiment"]["kind"], "verify");
    assert!(fs::read_to_string(out.join("assumptions.csv")).unwrap().starts_with("quantity,value\n"));
}

#[test]
fn constant_hamiltonian_gives_its_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = run("ergodic", &configs().join("constant_ergodic.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let tol = r["config"]["scheme"]["residual_tol"].as_f64().unwrap();
    for m in ["discount", "longtime"] {
        let l = r["result"][m]["lambda"].as_f64().unwrap();
        assert!((l - 2.0).abs() <= tol, "{m}: {l}");
    }
}

#[test]
fn malformed_spec_is_rejected_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, TWO_COERCIVE).unwrap();
    let out = tmp.path().join("out");
    let o = run("ergodic", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("coercive"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_and_wrong_kind_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("constant_ergodic.toml");
    assert_eq!(run("ergodic", &cfg, &out, &["--set", "scheme.bogus=1"]).status.code(), Some(1));
    assert_eq!(run("ergodic", &cfg, &out, &["--set", "experiment.kind=graph"]).status.code(), Some(1));
    assert_eq!(run("ergodic", &cfg, &out, &["--set", "scheme.cfl=-1"]).status.code(), Some(1));
    assert_eq!(run("ergodic", &cfg, &out, &["--set", "experiment.horizon=3"]).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn overrides_reach_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(
        "ergodic",
        &configs().join("constant_ergodic.toml"),
        &out,
        &["--set", "scheme.cfl=0.4", "--set", "experiment.method=discount"],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["scheme"]["cfl"].as_f64(), Some(0.4));
    assert!(r["result"]["longtime"].is_null());
    assert!(!out.join("longtime_history.csv").exists());
}

#[test]
fn step_cap_exits_with_numerical_status_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("n");
    let o = run(
        "ergodic",
        &configs().join("noncoercive_ergodic.toml"),
        &out,
        &["--set", "scheme.max_steps=20"],
    );
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "numerical_failure");
    assert!(r["error"].as_str().unwrap().contains("no convergence"));
    assert!(out.join("residual_history.csv").exists());
}

#[test]
fn csv_is_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("eikonal_effective.toml");
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let o = hjhomog(
            &[
                "effective",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--set",
                "grid.cells=64",
            ],
            &[("HJHOMOG_THREADS", threads)],
        );
        assert_eq!(o.status.code(), Some(0));
        tables.push(fs::read(out.join("effective.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn bad_thread_variable_is_rejected() {
    let o = hjhomog(&["corpus", "--only", "1"], &[("HJHOMOG_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn graph_experiment_small() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("g.toml");
    let text = fs::read_to_string(configs().join("graph_sign_changing.toml"))
        .unwrap()
        .replace("slopes = [0.0, 0.5, -0.5, 1.0, -1.0]", "slopes = [0.5]")
        .replace("cells = 64", "cells = 32")
        .replace("cells_per_unit = 64", "cells_per_unit = 32");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("g");
    let o = run("graph", &cfg, &out, &["--set", "experiment.lifted.cross_check=false"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["consistent"], true);
    assert!(fs::read_to_string(out.join("graph.csv")).unwrap().lines().count() == 2);
}

#[test]
fn corpus_rejects_halved_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let o = hjhomog(
        &["corpus", "--only", "5", "--cell-divisor", "2", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_ne!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("under-resolves"), "{stdout}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("5 (homogenization convergence)"));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn corpus_survives_looser_residual_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let o = hjhomog(
        &[
            "corpus",
            "--only",
            "1,2,3,4,5,6,7,8",
            "--residual-scale",
            "10",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 8);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 9);
}
