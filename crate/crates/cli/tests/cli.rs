//! End-to-end tests of the process boundary: subcommands, file outputs,
//! exit codes, and the byte-determinism contract.

use std::path::Path;
use std::process::{Command, Output};

fn resalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resalloc"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_trajectory_with_monotone_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = resalloc(&[
        "run",
        "--scenario",
        "cycle-quartic",
        "--t-end",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,cost,suboptimality,dispersion,feasibility_drift");
    let costs: Vec<f64> =
        lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(costs.len() > 100);
    let eps = 1e-6 * costs[0].abs().max(1.0);
    for w in costs.windows(2) {
        assert!(w[1] <= w[0] + eps, "cost rose from {} to {}", w[0], w[1]);
    }
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn check_graph_reports_disconnected_snapshots_and_connected_union() {
    let out = resalloc(&["check-graph", "--scenario", "switching-quadlse", "--window", "100"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("disconnected").count(), 4, "{text}");
    assert!(text.contains("union: connected; Assumption 1: satisfied"), "{text}");
}

#[test]
fn check_graph_rejects_assumption_for_short_window() {
    let out = resalloc(&["check-graph", "--scenario", "switching-quadlse", "--window", "25"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("Assumption 1: violated"), "{}", stdout(&out));
}

#[test]
fn oracle_reproduces_recorded_solution_at_seed_7() {
    let out = resalloc(&["oracle", "--scenario", "cycle-quartic", "--seed", "7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    // Regression values recorded from the first computation at this seed.
    assert!(text.contains("psi* = -1.9707971397743677e2"), "{text}");
    assert!(text.contains("F* = 1.6409194849986111e3"), "{text}");
    let residual: f64 = text
        .lines()
        .find(|l| l.starts_with("residual = "))
        .and_then(|l| l.strip_prefix("residual = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-9, "residual {residual}");
}

#[test]
fn identical_invocations_produce_identical_bytes() {
    let run = |dir: &Path| {
        let out = resalloc(&[
            "run",
            "--scenario",
            "cycle-quartic",
            "--t-end",
            "0.05",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        (
            std::fs::read(dir.join("trajectory.csv")).unwrap(),
            std::fs::read(dir.join("summary.txt")).unwrap(),
        )
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (csv1, sum1) = run(d1.path());
    let (csv2, sum2) = run(d2.path());
    assert_eq!(csv1, csv2, "CSV output must be byte-identical");
    assert_eq!(sum1, sum2, "summary output must be byte-identical");
}

#[test]
fn compare_writes_one_csv_per_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let out = resalloc(&[
        "compare",
        "--scenario",
        "cycle-quartic",
        "--t-end",
        "0.02",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["trajectory_combined.csv", "trajectory_linear.csv", "trajectory_sign-power.csv"] {
        let csv = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(csv.starts_with("t,cost,"), "{name} missing header");
    }
    let summary = std::fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    assert!(summary.contains("time-to-eps"));
    assert_eq!(summary.matches("protocol:").count(), 4, "{summary}"); // fingerprint + 3 runs
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = resalloc(&["run", "--scenario", "cycle-quartic", "--warp", "9"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "{err}");
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = resalloc(&["transmogrify"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_config_exits_one() {
    let out = resalloc(&["run", "--scenario", "/does/not/exist.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn malformed_config_exits_one_with_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(
        &path,
        "[scenario]\nseed = 1\nn = 2\nk = 0\n\n[graph]\ntype = cycle\n\n[costs]\nfamily = quartic\n\n[protocol]\nkind = linear\neta1 = 1\n\n[integration]\nh = fast\nt_end = 1\n",
    )
    .unwrap();
    let out = resalloc(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("'h'"), "{err}");
}

#[test]
fn numerically_failing_run_exits_two_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("explode.cfg");
    // Disagreement eigenvalue 2 with step size 3: Euler diverges, the cost
    // monitor trips, and the run aborts.
    std::fs::write(
        &path,
        "[scenario]\nseed = 1\nn = 2\nk = 4\nx0 = explicit 3 1\n\n[graph]\ntype = explicit\nedge = 0 1 1.0\n\n[costs]\nfamily = quadratic\ncost = 1 0\ncost = 1 0\n\n[protocol]\nkind = linear\neta1 = 1\n\n[integration]\nh = 3\nt_end = 30\nsample_every = 1\n",
    )
    .unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = resalloc(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // The partial trajectory and the diagnostic are still written.
    assert!(out_dir.path().join("trajectory.csv").exists());
    let summary = std::fs::read_to_string(out_dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("step size too large"), "{summary}");
}
