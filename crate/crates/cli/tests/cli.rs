use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(args)
        .output()
        .expect("failed to launch mfg")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TRIVIAL: &str = "dim = 1\nn = 8\nproblem.name = trivial\n";

#[test]
fn solve_trivial_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TRIVIAL);
    let out = dir.path().join("out");
    let res = mfg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = fs::read_to_string(out.join("fields.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0], "x0,u,m,hj_residual");
    for row in &lines[1..] {
        let u: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(u.abs() <= 1e-12);
    }

    let summary = json(&out.join("summary.json"));
    assert!(summary["hbar"].as_f64().unwrap().abs() <= 1e-10);
    assert!((summary["mass"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    for key in ["k0", "linf_u", "newton_iters_total", "eps_stages", "bisect_iters", "residual_linf"] {
        assert!(!summary[key].is_null(), "missing {key}");
    }
    for key in ["morrey_Du", "holder_alpha", "caccioppoli_C", "max_principle_margins"] {
        assert!(!summary["diagnostics"][key].is_null(), "missing diagnostics.{key}");
    }

    let stderr = String::from_utf8(res.stderr).unwrap();
    let records: Vec<Value> = stderr.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let stages = records.iter().filter(|r| r["event"] == "stage").count();
    assert_eq!(stages, summary["eps_stages"].as_array().unwrap().len());
    assert!(records.iter().all(|r| r["ts"].is_number()));
}

#[test]
fn summary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dim=2\nn=8\nproblem.name=anisotropic_2d\nseed=5\n");
    let mut texts = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let res = mfg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
        texts.push(fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn sweep_reproduces_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TRIVIAL);
    let out = dir.path().join("sweep");
    let res = mfg(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--hbars", "-1,0,1"]);
    assert_eq!(res.status.code(), Some(0));
    let rows = json(&out.join("sweep.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let h = row["hbar"].as_f64().unwrap();
        let m = row["mass"].as_f64().unwrap();
        assert!((m - (-h).exp()).abs() <= 1e-8, "{h}: {m}");
    }
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "dim=1\nn=8\nproblem.name=trivial\nproblem.coupling=decreasing\n",
        "dim=1\nn=7\nproblem.name=trivial\n",
        "dim=1\nn=8\nproblem.name=trivial\nsolver.eps_factor=1.5\n",
        "dim=1\nn=8\nproblem.name=trivial\nunknown.key=1\n",
    ] {
        let cfg = write_config(dir.path(), body);
        let res = mfg(&["verify", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "{body}");
    }
}

#[test]
fn bracket_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dim=1\nn=8\nproblem.name=trivial\nproblem.coupling=tanh\nsolver.newton_max_iter=15\n",
    );
    let res = mfg(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn verify_convergence_and_morrey() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dim=1\nn=32\nproblem.name=manufactured_1d\n");
    let out = dir.path().join("v");
    let out_s = out.to_str().unwrap();

    let res = mfg(&["verify", "--config", &cfg, "--out", out_s]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report = json(&out.join("verify.json"));
    assert!(report["max_principle"]["passed"].as_bool().unwrap());
    assert!(report["exact_error_linf"].as_f64().unwrap() < 1e-2);

    let fields = out.join("fields.csv");
    let res = mfg(&["morrey", "--config", &cfg, "--out", out_s, "--field", fields.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let morrey = json(&out.join("morrey.json"));
    assert!(morrey["morrey_du"].as_f64().unwrap() > 0.0);

    let res = mfg(&["convergence", "--config", &cfg, "--out", out_s, "--sizes", "32,64"]);
    assert_eq!(res.status.code(), Some(0));
    let rows = json(&out.join("convergence.json"))["rows"].as_array().unwrap().clone();
    let order = rows[1]["order"].as_f64().unwrap();
    assert!((order - 2.0).abs() < 0.3, "{order}");
}

#[test]
fn morrey_rejects_mismatched_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TRIVIAL);
    let out = dir.path().join("o");
    assert_eq!(mfg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let other = write_config(dir.path(), "dim=1\nn=16\nproblem.name=trivial\n");
    let fields = out.join("fields.csv");
    let res = mfg(&["morrey", "--config", &other, "--field", fields.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
