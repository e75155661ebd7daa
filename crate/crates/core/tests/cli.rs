use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn contest(args: &[&str]) -> Output {
    contest_in(args, None)
}

fn contest_in(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_contest"));
    cmd.args(args).env_remove("CONTEST_OUTPUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("CONTEST_OUTPUT_DIR", dir);
    }
    cmd.output().expect("run contest")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_record(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim().lines().last().unwrap_or_default()).expect("JSON error record on stderr")
}

#[test]
fn calibrate_prints_rho() {
    let o = contest(&["calibrate", "--r-obs", "0.671", "--c", "0.268", "--alpha", "0.228"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.881674\n");
}

#[test]
fn solve_csv_header_and_value() {
    let o = contest(&["solve", "--rho", "1", "--c", "0.1", "--alpha", "0.5", "--n", "1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,n,delta_n,epsilon_n,theta_1,theta_2");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] - 0.9).abs() < 1e-9);
    assert_eq!(row[1], 1000.0);
}

#[test]
fn metrics_json_format() {
    let o = contest(&["metrics", "--rho", "0.5", "--c", "0.2", "--alpha", "0.5", "--format", "json"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(doc.to_string().contains("r_R"), "{doc}");
}

#[test]
fn exit_code_two_for_usage_and_config_errors() {
    let o = contest(&["solve", "--rho", "abc"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "config_error");

    let o = contest(&["calibrate", "--c", "0.2", "--alpha", "0.2"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "calibrate", "r_obs": 0.6, "c": 0.2, "alpha": 0.2, "bogus": 1}"#).unwrap();
    let o = contest(&["calibrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&cfg, r#"{"command": "solve", "r_obs": 0.6}"#).unwrap();
    let o = contest(&["calibrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_code_three_for_domain_errors() {
    let o = contest(&["calibrate", "--r-obs", "0", "--c", "0.268", "--alpha", "0.228"]);
    assert_eq!(o.status.code(), Some(3));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "domain_error");
    assert_eq!(rec["exit_code"], 3);

    let o = contest(&["intervene", "--tau", "1.5"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "infeasible");

    let o = contest(&["solve", "--rho", "0.5", "--c", "1.5", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    assert!(contest(&["--help"]).status.success());
    assert!(contest(&["intervene", "--help"]).status.success());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"r_obs": 0.671, "c": 0.5, "alpha": 0.228}"#).unwrap();
    let from_file = contest(&["calibrate", "--config", cfg.to_str().unwrap()]);
    let overridden = contest(&["calibrate", "--config", cfg.to_str().unwrap(), "--c", "0.268"]);
    assert!(from_file.status.success() && overridden.status.success());
    assert_ne!(stdout(&from_file), stdout(&overridden));
    assert_eq!(stdout(&overridden), "0.881674\n");
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = contest_in(&["metrics", "--rho", "0.5", "--c", "0.2", "--alpha", "0.5"], Some(dir.path()));
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(text.starts_with("rho,c,alpha,t,r_R,r_S,RV\n"));

    let explicit = dir.path().join("other.json");
    let o = contest_in(
        &["metrics", "--rho", "0.5", "--c", "0.2", "--alpha", "0.5", "--format", "json", "-o", explicit.to_str().unwrap()],
        Some(dir.path()),
    );
    assert!(o.status.success());
    assert!(explicit.exists());
}

#[test]
fn sweep_grid_and_determinism() {
    let args = ["sweep", "--rho", "0.2:1.0:0.2", "--c", "0.1,0.5", "--alpha", "0.3"];
    let a = contest(&args);
    let b = contest(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,c,alpha,t,r_R,r_S,RV");
    assert_eq!(lines.len(), 1 + 5 * 2);
}

#[test]
fn intervene_tau_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("iv.csv");
    let o = contest(&["intervene", "--sweep-tau", "0.68:1.0:0.005", "-o", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,delta_rho,delta_c,objective,r_R");
    assert_eq!(lines.len(), 1 + 65);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5, "{line}");
        let tau: f64 = cols[0].parse().unwrap();
        let r_r: f64 = cols[4].parse().unwrap();
        assert!(r_r >= tau - 1e-6, "{line}");
    }

    let again = contest(&["intervene", "--sweep-tau", "0.68:1.0:0.005", "-o", path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn intervene_single_json() {
    let o = contest(&["intervene", "--tau", "0.95", "--a", "5", "--beta", "1.1", "--format", "json"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(doc.to_string().contains("delta_rho"), "{doc}");
}

#[test]
fn dynamics_writes_policy_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dyn.csv");
    let args = [
        "dynamics", "--n", "40", "--rho", "0.8", "--c", "0.25", "--m-v", "20", "--m-e", "20", "--iterations", "5",
        "-o", path.to_str().unwrap(),
    ];
    let o = contest(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("v,effort_g1,effort_g2\n"));
    let trace = std::fs::read_to_string(dir.path().join("dyn_trace.csv")).unwrap();
    assert!(trace.starts_with("iter,group,delta\n"));
    assert_eq!(trace.lines().count(), 1 + 5 * 2);

    assert!(contest(&args).status.success());
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn simulate_seeded_is_reproducible() {
    let args = [
        "simulate", "--n", "200", "--rho", "0.8", "--c", "0.2", "--alpha", "0.5", "--trials", "50", "--seed", "7",
        "--deviation-grid", "5", "--probe-points", "3",
    ];
    let a = contest(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = contest(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("trials,r_R,r_R_se,"));
    assert_eq!(text.lines().nth(1).unwrap().split(',').next(), Some("50"));
}
