use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branco-lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn validate_accepts_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["validate", "--lattice", "torus2d:2x2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 sites"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "rates.a = 1\nrates.zeta = 2\n").unwrap();
    let out = lab(dir.path(), &["validate", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zeta"));
}

#[test]
fn oracle_csv_is_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["oracle", "--cap", "6", "--site-count", "1", "--out", "run/"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("run/oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("state_index,state,probability"));
    let probs: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 7);
    assert!(probs.iter().all(|&p| p >= 0.0));
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn trajectories_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.cfg"),
        "init.type = poisson\ninit.lambda = 1.5\nsim.replicates = 40\nsim.t_grid = 0.5, 1\n",
    )
    .unwrap();
    for (threads, prefix) in [("1", "a_"), ("3", "b_")] {
        let out = lab(
            dir.path(),
            &["simulate", "--config", "small.cfg", "--seed", "5", "--threads", threads, "--out", prefix],
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a_trajectory.csv")).unwrap();
    let b = fs::read(dir.path().join("b_trajectory.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 40 * 2 * 3);
}

#[test]
fn precondition_failure_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nopair.cfg"), "rates.a = 0\nrates.c = 0\nsim.replicates = 10\n").unwrap();
    let out = lab(dir.path(), &["duality", "--config", "nopair.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}
