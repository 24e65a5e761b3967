use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmt-balance"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn cmt-balance");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn run_writes_a_full_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let trace = dir.path().join("trace.csv");
    write(
        &cfg,
        "steps = 25\n\
         np = 4\n\
         particles = 400\n\
         trigger = fixed:10\n\
         # trailing comment lines are fine\n",
    );
    let out = run_ok(bin().args([
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        trace.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("ran 25 steps on 4 ranks"), "{stdout}");

    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "step,sim_time,imbalance,max_load,mean_load,lb_event,lb_overhead,spread"
    );
    assert_eq!(lines.len(), 26, "header plus one row per step");
    // fixed:10 must mark exactly steps 10 and 20 as balancing events
    let events: Vec<u64> = lines[1..]
        .iter()
        .filter(|l| l.split(',').nth(5) == Some("1"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(events, vec![10, 20]);
}

#[test]
fn repeated_runs_emit_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, mode) in [(&a, "sequential"), (&b, "threaded")] {
        run_ok(bin().args([
            "run",
            "--steps",
            "20",
            "--ranks",
            "4",
            "--trigger",
            "adaptive",
            "--exec-mode",
            mode,
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn flags_override_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write(&cfg, "steps = 90\nnp = 2\n");
    let out = run_ok(bin().args(["run", "--config", cfg.to_str().unwrap(), "--steps", "7"]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("ran 7 steps on 2 ranks"), "{stdout}");
}

#[test]
fn infeasible_capacity_exits_2() {
    let out = bin()
        .args(["run", "--ranks", "2", "--lelt", "5", "--steps", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("infeasible"), "{stderr}");
}

#[test]
fn bad_flag_values_exit_1() {
    for args in [
        ["run", "--algorithm", "sideways"],
        ["run", "--trigger", "fixed:zero"],
    ] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn partition_prints_first_elements() {
    let dir = tempfile::tempdir().unwrap();
    let loads = dir.path().join("loads.csv");
    write(&loads, "4, 4, 4, 6, 8, 9,\n9, 10, 6, 4, 4, 4\n");
    let mut got = Vec::new();
    for alg in ["centralized", "distributed", "hybrid"] {
        let out = run_ok(bin().args([
            "partition",
            "--loads",
            loads.to_str().unwrap(),
            "--np",
            "3",
            "--lelt",
            "12",
            "--algorithm",
            alg,
        ]));
        got.push(String::from_utf8(out.stdout).unwrap().trim().to_string());
    }
    assert_eq!(got, ["1,6,8", "1,5,8", "1,5,8"]);
}

#[test]
fn partition_rejects_undersized_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let loads = dir.path().join("loads.csv");
    write(&loads, "1 1 1 1 1 1 1 1");
    let out = bin()
        .args([
            "partition",
            "--loads",
            loads.to_str().unwrap(),
            "--np",
            "2",
            "--lelt",
            "3",
            "--algorithm",
            "centralized",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
