use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pfeigen(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfeigen"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn read(out: &Path, name: &str) -> String {
    fs::read_to_string(out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, idx: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn eigen_unit_potential() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(dir.path(), &["eigen", "--preset", "unit", "--eval-count", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = read(dir.path(), "h_estimate.csv");
    assert!(h.starts_with("x,h_window,h_oracle\n"));
    assert!(column(&h, 1).iter().all(|v| (v - 1.0).abs() < 0.1));
    let lambda = read(dir.path(), "lambda.csv");
    assert!(column(&lambda, 1).iter().all(|&v| v == 0.0));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["log_lambda_hat"].as_f64(), Some(0.0));
}

#[test]
fn eigen_with_oracle_and_delta_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(
        dir.path(),
        &[
            "eigen", "--model", "neutron", "--deltas", "0,1", "--n-particles", "200", "--two-n", "60", "--window", "6",
            "--grid-size", "128", "--chain-length", "5", "--oracle",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for d in ["0", "1"] {
        let h = read(dir.path(), &format!("h_estimate_delta_{d}.csv"));
        assert_eq!(h.lines().count(), 151);
        let est = column(&h, 1);
        let oracle = column(&h, 2);
        assert!(est.iter().all(|v| v.is_finite() && *v > 0.0));
        if d == "0" {
            let worst = est.iter().zip(&oracle).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst < 0.05, "{worst}");
        }
        assert_eq!(read(dir.path(), &format!("twisted_path_delta_{d}.csv")).lines().count(), 7);
    }
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["eigen", "--model", "neutron", "--delta", "0.5", "--n-particles", "50", "--two-n", "20", "--seed", "9"];
    assert!(pfeigen(a.path(), &args).status.success());
    assert!(pfeigen(b.path(), &[&args[..], &["--threads", "1"]].concat()).status.success());
    for name in ["h_estimate.csv", "lambda.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name));
    }
}

#[test]
fn oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(dir.path(), &["oracle", "--model", "neutron", "--grid-size", "256", "--met-n", "10"]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert!((summary["lambda_star"].as_f64().unwrap() - 0.5).abs() < 1e-5);
    let met = read(dir.path(), "met_profile.csv");
    assert!(met.starts_with("n,d_n,bound\n"));
    assert!(met.lines().skip(1).all(|l| {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        v[1] <= v[2]
    }));
    assert!(read(dir.path(), "oracle_eigen.csv").starts_with("x,h_star,eta_star_density\n"));
}

#[test]
fn bellman_cir() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(
        dir.path(),
        &["bellman", "--n-particles", "60", "--two-n", "40", "--window", "5", "--eval-count", "33", "--oracle", "--grid-size", "256"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read(dir.path(), "value_function.csv");
    assert!(v.starts_with("x,v_hat,v_oracle\n"));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert!(summary["bellman_residual"].as_f64().unwrap() < 1e-5);
    let jumps: Vec<f64> = summary["largest_jumps"].as_array().unwrap().iter().map(|j| j.as_f64().unwrap()).collect();
    assert!((jumps[0] - 5.0).abs() <= 0.5 && (jumps[1] - 15.0).abs() <= 0.5, "{jumps:?}");
}

#[test]
fn rare_event_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(
        dir.path(),
        &[
            "rare-event", "--alpha", "6", "--horizons", "0,2,4", "--deviations", "0.8,1", "--methods", "naive,conditional,twisted",
            "--n-particles", "30", "--systems", "50", "--chains", "2", "--naive-replicates", "1000", "--twisted-replicates", "1000",
            "--grid-size", "101", "--curve-alphas", "-1,0,1", "--curve-particles", "30", "--curve-n", "20", "--t-values", "0,0.3",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "rare_event.csv");
    assert!(csv.starts_with("method,m,delta,alpha,mean,relvar,L\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3 * 2);
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] == "0" || f[2] == "1" {
            assert_eq!(f[4], "0", "{line}");
            assert_eq!(f[5], "", "{line}");
        }
    }
    assert_eq!(read(dir.path(), "lambda_curve.csv").lines().count(), 4);
    let rate = read(dir.path(), "rate_function.csv");
    assert!(rate.starts_with("t,I,argmax_alpha\n"));
    assert!(column(&rate, 1).iter().all(|&i| i >= 0.0));
}

#[test]
fn validate_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(dir.path(), &["validate", "--model", "neutron", "--delta", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "validate.json")).unwrap();
    assert_eq!(report["passed"], true);

    let o = pfeigen(dir.path(), &["validate", "--model", "neutron", "--delta", "1", "--corrupt", "h"]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "validate.json")).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn validate_scaling_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfeigen(
        dir.path(),
        &["validate", "--model", "neutron", "--two-n", "40", "--scaling", "true", "--scaling-seeds", "30", "--grid-size", "256"],
    );
    assert!(o.status.code().is_some());
    let table = read(dir.path(), "scaling.csv");
    assert_eq!(table.lines().count(), 5);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "validate.json")).unwrap();
    let slope = report["checks"].as_array().unwrap().last().unwrap()["value"].as_f64().unwrap();
    assert!(slope < 0.0, "{slope}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfeigen(dir.path(), &["eigen", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(pfeigen(dir.path(), &["eigen", "--two-n", "7"]).status.code(), Some(1));
    assert_eq!(pfeigen(dir.path(), &["eigen", "--model", "neutron", "--delta", "x"]).status.code(), Some(1));
    assert_eq!(pfeigen(dir.path(), &["frobnicate"]).status.code(), Some(1));

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "model = neutron\nwindow = zero\n").unwrap();
    let o = pfeigen(dir.path(), &["eigen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.cfg:2"));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = pfeigen(&blocker.join("sub"), &["oracle", "--grid-size", "16"]);
    assert_eq!(o.status.code(), Some(3));
}
