//! End-to-end tests of the `sparse-debias` binary: outputs, exit codes,
//! config precedence and error reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparse-debias"));
    c.env_remove("DEBIAS_LASSO_THREADS");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn meta(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap()
}

fn simulate(dir: &Path, seed: &str) {
    ok(bin()
        .args(["simulate", "--cov", "circulant:0.8", "--p", "30", "--n", "60", "--s0", "3", "--amp", "0.15", "--sigma", "1"])
        .args(["--seed", seed, "--out"])
        .arg(dir));
}

#[test]
fn simulate_writes_dataset_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    simulate(&dir, "7");
    for f in ["X.csv", "y.csv", "w.csv", "dataset.json", "meta.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let x = fs::read_to_string(dir.join("X.csv")).unwrap();
    assert_eq!(x.lines().count(), 61);
    assert!(!x.contains('\r'));
    let m = meta(&dir);
    assert_eq!(m["invocation"]["command"], "simulate");
    assert_eq!(m["invocation"]["params"]["seed"], 7);
    assert_eq!(m["invocation"]["params"]["covariance"]["r"], 0.8);
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    simulate(&a, "7");
    simulate(&b, "7");
    simulate(&c, "8");
    for f in ["X.csv", "y.csv", "w.csv", "dataset.json", "meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("X.csv")).unwrap(), fs::read(c.join("X.csv")).unwrap());
}

#[test]
fn validation_errors_exit_2_with_named_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin().args(["simulate", "--s0", "40", "--p", "30", "--out"]).arg(tmp.path().join("x")));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[BadSparsity]:"), "{err}");
    assert!(err.contains("s0"));
    assert!(!tmp.path().join("x").exists());

    let out = run(bin().args(["simulate", "--cov", "banded", "--out"]).arg(tmp.path().join("y")));
    assert_eq!(out.status.code(), Some(2));

    let out = run(bin().args(["simulate", "--bogus", "1", "--out"]).arg(tmp.path().join("z")));
    assert_eq!(out.status.code(), Some(2));

    let out = run(bin().args(["--threads", "0", "simulate", "--out"]).arg(tmp.path().join("w")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"p": 20, "n": 25, "s0": 2, "seed": 3}"#).unwrap();
    let dir = tmp.path().join("sim");
    ok(bin().args(["simulate", "--config"]).arg(&cfg).args(["--n", "35", "--out"]).arg(&dir));
    let p = &meta(&dir)["invocation"]["params"];
    assert_eq!((p["p"].as_u64(), p["n"].as_u64(), p["seed"].as_u64()), (Some(20), Some(35), Some(3)));

    fs::write(&cfg, r#"{"p": 20, "colour": "red"}"#).unwrap();
    let out = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("bad")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[InvalidConfig]:"));
}

#[test]
fn infer_known_omega_writes_one_row_per_coordinate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim");
    simulate(&data, "7");
    let out = tmp.path().join("inf");
    ok(bin().args(["infer", "--data"]).arg(&data).arg("--out").arg(&out));
    let text = fs::read_to_string(out.join("infer.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("coordinate,theta_hat,theta_d,lower,upper,p_value"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 30);
    for r in &rows {
        assert!(r[3] <= r[2] && r[2] <= r[4]);
        assert!((0.0..=1.0).contains(&r[5]));
    }
    let m = meta(&out);
    let mult = m["derived"]["multiplier"].as_f64().unwrap();
    assert!((mult - 1.959964).abs() < 1e-6);
    assert!(out.join("debias.csv").exists());
}

#[test]
fn infer_with_covariance_file_matches_envelope_model() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim");
    simulate(&data, "9");
    let p: i32 = 30;
    let mut csv = (0..p).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",") + "\n";
    for i in 0..p {
        let row: Vec<String> = (0..p).map(|j| format!("{}", 0.8f64.powi((i - j).abs()))).collect();
        csv += &(row.join(",") + "\n");
    }
    let sigma = tmp.path().join("sigma.csv");
    fs::write(&sigma, csv).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(bin().args(["infer", "--data"]).arg(&data).arg("--out").arg(&a));
    ok(bin().args(["infer", "--data"]).arg(&data).arg("--sigma-file").arg(&sigma).arg("--out").arg(&b));
    let read = |d: &Path| -> Vec<f64> {
        fs::read_to_string(d.join("infer.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect()
    };
    for (x, y) in read(&a).iter().zip(read(&b)) {
        assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    }
}

#[test]
fn infer_nodewise_and_split_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim");
    simulate(&data, "7");
    let nw = tmp.path().join("nw");
    ok(bin().args(["infer", "--mode", "nodewise", "--lambda-tilde-k", "2.5", "--data"]).arg(&data).arg("--out").arg(&nw));
    let m = meta(&nw);
    assert_eq!(m["invocation"]["params"]["lambda_tilde_k"], 2.5);
    let expected = 2.5 * ((30f64).ln() / 60.0).sqrt();
    assert!((m["derived"]["lambda_tilde"].as_f64().unwrap() - expected).abs() < 1e-12);

    let sp = tmp.path().join("sp");
    ok(bin().args(["infer", "--mode", "split", "--sigma", "1", "--data"]).arg(&data).arg("--out").arg(&sp));
    let m = meta(&sp);
    assert_eq!(m["derived"]["n_correction"], 30);
    assert_eq!(m["derived"]["split_matrix"], "known_omega");
}

#[test]
fn infer_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim");
    simulate(&data, "7");
    let out = run(bin().args(["infer", "--alpha", "1.5", "--data"]).arg(&data).arg("--out").arg(tmp.path().join("a")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[BadAlpha]:"));

    let out = run(bin().args(["infer", "--data"]).arg(tmp.path().join("missing")).arg("--out").arg(tmp.path().join("b")));
    assert_eq!(out.status.code(), Some(2));

    let envelope = data.join("dataset.json");
    let mut env: Value = serde_json::from_str(&fs::read_to_string(&envelope).unwrap()).unwrap();
    env.as_object_mut().unwrap().remove("covariance");
    fs::write(&envelope, serde_json::to_string(&env).unwrap()).unwrap();
    let out = run(bin().args(["infer", "--data"]).arg(&data).arg("--out").arg(tmp.path().join("c")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("known-omega"));
}

#[test]
fn fit_writes_sparse_record() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sim");
    simulate(&data, "7");
    let out = tmp.path().join("fit");
    ok(bin().args(["fit", "--lambda", "0.2", "--data"]).arg(&data).arg("--out").arg(&out));
    let rec: Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(rec["lambda"], 0.2);
    assert_eq!(rec["p"], 30);
    assert_eq!(rec["converged"], true);
}

#[test]
fn kurtosis_experiment_writes_csv_and_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    ok(bin()
        .args(["experiment", "kurtosis", "--epsilon", "0.2", "--p", "40", "--replicates", "10", "--deltas", "0.5,0.9"])
        .arg("--out")
        .arg(&out));
    let csv = fs::read_to_string(out.join("kurtosis.csv")).unwrap();
    assert!(csv.starts_with("delta,n,mean_kurtosis,se_kurtosis,passes,refined\n"));
    assert!(fs::read_to_string(out.join("kurtosis.svg")).unwrap().starts_with("<svg"));
    assert!(out.join("summary.json").exists());

    let out = tmp.path().join("k2");
    ok(bin()
        .args(["experiment", "kurtosis", "--p", "40", "--replicates", "10", "--deltas", "0.5,0.9", "--epsilons", "0.1,0.2"])
        .args(["--no-plot", "--out"])
        .arg(&out));
    assert_eq!(fs::read_to_string(out.join("delta_c.csv")).unwrap().lines().count(), 3);
    assert!(out.join("kurtosis_eps_0.1.csv").exists());
    assert!(!out.join("kurtosis.svg").exists());
}

#[test]
fn risk_curve_records_correlation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(bin()
        .args(["experiment", "risk-curve", "--r", "0.9", "--n", "80", "--p", "120", "--s0", "4", "--replicates", "2"])
        .args(["--lambda-grid", "0.05,0.1,0.2", "--out"])
        .arg(&out));
    let m = meta(&out);
    assert_eq!(m["invocation"]["params"]["kind"], "risk-curve");
    assert_eq!(m["invocation"]["params"]["params"]["config"]["covariance"]["r"], 0.9);
    let csv = fs::read_to_string(out.join("risk.csv")).unwrap();
    assert!(csv.starts_with("lambda,R_true,R_naive,R_sure,df\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("risk.svg").exists());
}

#[test]
fn two_step_denoiser_and_sure_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    for (kind, file) in [("two-step", "two_step.csv"), ("denoiser-check", "denoiser.csv"), ("sure", "sure.csv")] {
        let out = tmp.path().join(kind);
        ok(bin()
            .args(["experiment", kind, "--n", "120", "--p", "80", "--s0", "4", "--replicates", "3", "--out"])
            .arg(&out));
        assert_eq!(fs::read_to_string(out.join(file)).unwrap().lines().count(), 4, "{kind}");
        let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert!(s["lambda"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn experiment_rejects_foreign_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin().args(["experiment", "two-step", "--alpha", "0.1", "--out"]).arg(tmp.path().join("a")));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin().args(["experiment", "coverage", "--epsilons", "0.1", "--out"]).arg(tmp.path().join("b")));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin().args(["experiment", "histogram", "--out"]).arg(tmp.path().join("c")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_rejects_foreign_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("meta.json");
    fs::write(&m, r#"{"tool": "other", "version": "1", "invocation": {"command": "simulate", "params": {}}}"#).unwrap();
    let out = run(bin().arg("rerun").arg(&m).arg("--out").arg(tmp.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
}
