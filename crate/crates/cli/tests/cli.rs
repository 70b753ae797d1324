use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decoy_pns::Scenario;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decoy-pns"))
}

fn baseline_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/baseline.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

fn baseline_json() -> Value {
    serde_json::from_str(&fs::read_to_string(baseline_path()).unwrap()).unwrap()
}

#[test]
fn shipped_baseline_matches_builtin() {
    let text = fs::read_to_string(baseline_path()).unwrap();
    assert_eq!(Scenario::from_json(&text).unwrap(), Scenario::baseline());
}

#[test]
fn evaluate_prints_reference_metrics() {
    let o = run(&["evaluate", "--scenario", baseline_path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("rho_e_sd = 11.82"), "{out}");
    assert!(out.contains("rho_y_sd = 6.13"), "{out}");
    assert!(out.contains("R_k      = 6.08e-5"), "{out}");
}

#[test]
fn evaluate_writes_record_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "evaluate",
        "--scenario",
        baseline_path().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let record: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!((record["rho_e_sd"].as_f64().unwrap() - 11.8208).abs() < 1e-3);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "evaluate");
    assert_eq!(manifest["outputs"], serde_json::json!(["metrics.csv", "metrics.json"]));
    assert!(manifest["scenario_digest"].as_str().unwrap().starts_with("sha256:"));
    assert!(manifest["started_at"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&[
        "evaluate",
        "--scenario",
        baseline_path().to_str().unwrap(),
        "--frobnicate",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage:"));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_scenario_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = baseline_json();
    v["receiver"]["eta_pd"] = 0.0.into();
    v["link"]["eve_fraction"] = 1.0.into();
    v["truncation_order"] = 1.into();
    let path = write_scenario(dir.path(), "bad.json", &v);
    let o = run(&["evaluate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("3 violations"), "{err}");
    assert!(err.contains("eta_pd must be in (0,1]"));
    assert!(err.contains("eve_fraction must be in (0,1)"));
    assert!(err.contains("truncation_order"));

    let mut v = baseline_json();
    v["receiver"]["dark_count"] = 0.1.into();
    let path = write_scenario(dir.path(), "extra.json", &v);
    assert_eq!(run(&["evaluate", "--scenario", &path]).status.code(), Some(1));
    assert_eq!(
        run(&["evaluate", "--scenario", "/nonexistent.json"]).status.code(),
        Some(1)
    );
}

const TABLE4: &str = "\
lambda_d,rho_e_sd,rho_y_sd,R_k
0.01,4585.15,2436.84,6.08e-5
0.05,184.57,97.57,6.08e-5
0.10,46.51,24.42,6.08e-5
0.15,20.84,10.87,6.08e-5
0.20,11.82,6.13,6.08e-5
0.30,5.35,2.74,6.08e-5
0.40,3.06,1.55,6.08e-5
0.50,2.00,1.00,6.08e-5
";

#[test]
fn tables_are_golden_and_stable_under_key_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&[
        "tables",
        "--scenario",
        baseline_path().to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(a.join("table4.csv")).unwrap(), TABLE4);
    assert!(fs::read_to_string(a.join("table1.csv"))
        .unwrap()
        .contains("100,20.00,100.00,100,1.00,0.99"));
    assert!(fs::read_to_string(a.join("table2.csv"))
        .unwrap()
        .starts_with("lambda,phi_0,phi_1,phi_2,phi_gt1,phi_gt2\n"));

    // Same scenario, keys written in reverse order.
    let text = r#"{"truncation_order":4,
        "receiver":{"alpha_err":0.2,"alpha_sift":0.2,"eta_pd":0.3,"p_pl":0.5},
        "link":{"eve_fraction":0.5,"l_total":50,"alpha":0.2},
        "source":{"m_v":10000,"m_d":500000,"m_s":1000000,"lambda_d":0.2,"lambda_s":0.5}}"#;
    let reordered = dir.path().join("reordered.json");
    fs::write(&reordered, text).unwrap();
    let o = run(&[
        "tables",
        "--scenario",
        reordered.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["table1.csv", "table2.csv", "table4.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let digest = |d: &Path| -> Value {
        let m: Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["scenario_digest"].clone()
    };
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn sweep_writes_csv_and_charts_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "sweep",
            "--scenario",
            baseline_path().to_str().unwrap(),
            "--axis",
            "l_total",
            "--values",
            "10,20,50,100",
            "--svg",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(out);
    }
    for f in ["sweep.csv", "rate.svg", "ratios.svg"] {
        assert_eq!(
            fs::read(outputs[0].join(f)).unwrap(),
            fs::read(outputs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = fs::read_to_string(outputs[0].join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "lambda_s,lambda_d,l_total,rho_e_sd,rho_y_sd,R_k,y_bs,y_bd");
    assert!(lines[3].starts_with("0.5,0.2,50,11.82"));
}

#[test]
fn sweep_rejects_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let s = baseline_path();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "sweep",
        "--scenario",
        s.to_str().unwrap(),
        "--axis",
        "lambda_d",
        "--values",
        "0.3,0.2",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "sweep",
        "--scenario",
        s.to_str().unwrap(),
        "--axis",
        "lambda_d",
        "--values",
        "0.2,0.9",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda_d = 0.9"), "{}", stderr(&o));
    let o = run(&[
        "sweep",
        "--scenario",
        s.to_str().unwrap(),
        "--axis",
        "alpha",
        "--values",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn design_exit_status_reflects_feasibility() {
    let s = baseline_path();
    let o = run(&["design", "--scenario", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("recommended lambda_d = 0.2"));
    let o = run(&["design", "--scenario", s.to_str().unwrap(), "--max-eve-ratio", "6"]);
    assert!(stdout(&o).contains("recommended lambda_d = 0.3"));
    let o = run(&["design", "--scenario", s.to_str().unwrap(), "--max-eve-ratio", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("m_s/m_d = 2"));
    let o = run(&["design", "--scenario", s.to_str().unwrap(), "--min-yield-ratio", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_agrees_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "simulate",
            "--scenario",
            baseline_path().to_str().unwrap(),
            "--seed",
            "7",
            "--replications",
            "2",
            "--scale",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("2/2 replications agree"));
        outs.push(out);
    }
    for f in ["tally.csv", "agreement.csv"] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let agreement = fs::read_to_string(outs[0].join("agreement.csv")).unwrap();
    assert!(agreement.starts_with("replication,counter,expected,observed,z,pass\n"));
    assert_eq!(agreement.lines().count(), 1 + 2 * 19);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(outs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn simulate_reports_disagreement_with_exit_2() {
    // Physical truncation keeps five-photon and larger pulses that the
    // analytic model drops; at λ_s = 1 that biases Eve's two-photon count by
    // several standard deviations.
    let dir = tempfile::tempdir().unwrap();
    let mut v = baseline_json();
    v["source"]["lambda_s"] = 1.0.into();
    let path = write_scenario(dir.path(), "bright.json", &v);
    let out = dir.path().join("out");
    let o = run(&[
        "simulate",
        "--scenario",
        &path,
        "--seed",
        "3",
        "--scale",
        "4",
        "--truncation",
        "physical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stderr(&o).contains("oracle disagreement"));
    assert!(out.join("agreement.csv").exists());
}

#[test]
fn guide_shows_real_evaluate_output() {
    let guide = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src/cli.md")).unwrap();
    let o = run(&["evaluate", "--scenario", baseline_path().to_str().unwrap()]);
    assert!(
        guide.contains(&stdout(&o)),
        "book/src/cli.md is out of date:\n{}",
        stdout(&o)
    );
}
