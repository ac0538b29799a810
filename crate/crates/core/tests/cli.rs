use std::path::{Path, PathBuf};
use std::process::Command;

use mission_sched::cli::run;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mission-sched")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn in_process(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("mission-sched").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn solve_prints_the_golden_schedule() {
    let w = scenarios().join("golden.csv");
    let (code, out, _) = bin(&["solve", "--workload", w.to_str().unwrap(), "--solver", "exact"]);
    assert_eq!(code, 0);
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/solve_golden.txt")).unwrap();
    assert_eq!(out, golden);
}

#[test]
fn solve_with_greedy() {
    let w = scenarios().join("golden.csv");
    let (code, out, _) = in_process(&["solve", "--workload", w.to_str().unwrap(), "--solver", "greedy"]);
    assert_eq!(code, 0);
    assert_eq!(out, "1,0,1,1,0,2\n1,0,2,2,2,5\ndropped: 3\nobjective: 5.00003\nstatus: HEURISTIC\n");
}

#[test]
fn solve_on_a_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.csv");
    std::fs::write(&w, "1,2,2,1,0,0,1\n2,3,5,1,0,0,1\n3,5,6,1,0,0,1\n").unwrap();
    let c = dir.path().join("c.txt");
    std::fs::write(&c, "[machine 1]\nslots_per_core = 2\n[machine 2]\nslots_per_core = 2\n[link 1 2]\nbandwidth = 1\n").unwrap();
    let (code, out, err) = in_process(&["solve", "--workload", w.to_str().unwrap(), "--cluster", c.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, "1,0,1,1,0,2\n1,0,2,2,2,5\n2,0,1,3,0,6\ndropped:\nobjective: 10.00002\nstatus: OPTIMAL\n");
}

#[test]
fn missing_file_exits_2_naming_the_path() {
    let (code, _, err) = bin(&["solve", "--workload", "/nonexistent/w.csv"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/w.csv"), "{err}");
}

#[test]
fn unknown_flag_exits_1_with_usage() {
    let (code, _, err) = bin(&["solve", "--frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"), "{err}");
    let (code, _, _) = bin(&[]);
    assert_eq!(code, 1);
}

#[test]
fn help_exits_0() {
    let (code, out, _) = in_process(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("simulate"));
}

#[test]
fn malformed_workload_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.csv");
    std::fs::write(&w, "1,2,2\n2,three,5\n").unwrap();
    let (code, _, err) = in_process(&["solve", "--workload", w.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("w.csv:2:"), "{err}");
}

#[test]
fn bad_epsilon_is_a_usage_error() {
    let w = scenarios().join("golden.csv");
    let (code, _, _) = in_process(&[
        "classify", "--workload", w.to_str().unwrap(), "--algorithm", "greedy", "--budget-ms", "10", "--epsilon", "zero",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn classify_golden_greedy() {
    let w = scenarios().join("golden.csv");
    let (code, out, _) = in_process(&[
        "classify", "--workload", w.to_str().unwrap(), "--algorithm", "greedy", "--budget-ms", "1000", "--epsilon", "0.01",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: IN_M"), "{out}");
    assert!(out.contains("optimal_value: 5\n"), "{out}");
}

#[test]
fn demo_runs() {
    let (code, out, _) = in_process(&[
        "demo", "--problem", "path", "--generate", "sparse", "--n", "1000", "--budget-ms", "1000",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: IN_M"), "{out}");
    let (code, out, _) = in_process(&["demo", "--problem", "hampath", "--generate", "blocked", "--n", "8", "--budget-ms", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: NOT_IN_M"), "{out}");
    let (code, _, _) = in_process(&["demo", "--problem", "hampath", "--generate", "complete", "--n", "13", "--budget-ms", "5"]);
    assert_eq!(code, 2);
}

#[test]
fn demo_reads_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    std::fs::write(&g, "3 2\n0 1\n1 2\n").unwrap();
    let (code, out, _) = in_process(&["demo", "--problem", "hampath", "--graph", g.to_str().unwrap(), "--budget-ms", "100"]);
    assert_eq!(code, 0);
    assert!(out.contains("approx_value: 1"), "{out}");
    std::fs::write(&g, "3 2\n0 1\n").unwrap();
    let (code, _, err) = in_process(&["demo", "--problem", "path", "--graph", g.to_str().unwrap(), "--budget-ms", "100"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.txt"), "[machine 1]\n[machine 2]\n[link 1 2]\nbandwidth = 4\n").unwrap();
    let scen = dir.path().join("s.txt");
    std::fs::write(
        &scen,
        "[scenario]\ncluster = c.txt\nsolver = local_search\nrng_seed = 9\n[stream]\nrate_hz = 60\nduration_ms = 1000\nanalysis_ms = 20\nanalysis_max_ms = 40\nlatency_ms = 400\nsize = 8\n",
    )
    .unwrap();
    let a = in_process(&["simulate", "--scenario", scen.to_str().unwrap()]);
    let b = bin(&["simulate", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(a.0, 0, "{}", a.2);
    assert_eq!(a.1, b.1);
    let out = dir.path().join("report.txt");
    let (code, _, _) = in_process(&["simulate", "--scenario", scen.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(out).unwrap(), a.1);
    let other = in_process(&["simulate", "--scenario", scen.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(other.1, a.1);
}

#[test]
fn scenario_errors_carry_lines() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.txt"), "[machine 1]\n").unwrap();
    let scen = dir.path().join("s.txt");
    std::fs::write(&scen, "[scenario]\ncluster = c.txt\nspeed = 3\n[stream]\nrate_hz = 60\n").unwrap();
    let (code, _, err) = in_process(&["simulate", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("s.txt:3:"), "{err}");
    std::fs::write(&scen, "[scenario]\ncluster = missing.txt\n").unwrap();
    let (code, _, err) = in_process(&["simulate", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.txt"), "{err}");
    std::fs::write(&scen, "[scenario]\ncluster = c.txt\n[stream]\nrate_hz = 0\nduration_ms = 1\nanalysis_ms = 1\nlatency_ms = 1\n").unwrap();
    let (code, _, err) = in_process(&["simulate", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("s.txt:4:"), "{err}");
}
