use std::io::Write;
use std::process::{Command, Stdio};

fn cbwk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbwk"))
}

fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn gen_data_writes_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let status = cbwk().args(["gen-data", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("instance.json")).unwrap()).unwrap();
    assert!(doc["opt"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["instance"]["spec"]["actions"].as_array().unwrap().len(), 6);
    let spec = std::fs::read_to_string(out.join("problem.json")).unwrap();
    cbwk::ProblemSpec::from_json_str(&spec).unwrap();
}

#[test]
fn simulate_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"instance":{"loan":{"horizon":300,"budget":9.6}},
            "policy":{"working_budget":"full","bonus":"practical","explore_scale":0.1,"nu_mode":"empirical"}}"#,
    );
    let out = dir.path().join("sim");
    let status = cbwk()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seeds", "4,5,6", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for seed in [4, 5, 6] {
        let text = std::fs::read_to_string(out.join(format!("run_seed{seed}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 301);
    }
    let summary: cbwk::bench::SummaryReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.n_runs, 3);
    assert!(summary.within_budget && summary.bonus_bound_ok);
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "t,metric,mean,se");
    assert_eq!(plot.lines().count(), 1 + 3 * 301);
}

#[test]
fn lp_solve_reads_stdin_and_round_trips() {
    let lp = r#"{"nu":[0.3,0.7],"gain":[[0.0,0.1,0.7],[0.0,0.45,0.2]],
        "cost_rate":[[[0.0],[0.05],[0.6]],[[0.0],[0.3],[0.1]]],"budget":123.456789012345,"horizon":1000.0}"#;
    let mut child = cbwk()
        .arg("lp-solve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(lp.as_bytes()).unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(doc["kkt"]["passed"], true);
    let solution: cbwk::LpSolution = serde_json::from_value(doc["solution"].clone()).unwrap();
    let problem: cbwk::LpProblem = serde_json::from_str(lp).unwrap();
    let direct = cbwk::solve_lp(&problem).unwrap();
    // Values survive the decimal round trip bit for bit.
    assert_eq!(solution.value.to_bits(), direct.value.to_bits());
    assert_eq!(solution, direct);
}

#[test]
fn lp_solve_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), r#"{"nu":[1.0]}"#);
    let output = cbwk().args(["lp-solve", "--input"]).arg(&path).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn bench_writes_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"instance":{"loan":{"horizon":200,"budget":6.4}},"seeds":[1,2],
            "sweep":{"explore_scales":[0.1],"etas":[0.05,0.1]}}"#,
    );
    let out = dir.path().join("bench");
    let status = cbwk().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let sweep: cbwk::bench::SweepResult =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.entries.len(), 2);
    assert!(out.join("box-b_C0.1").join("run_seed1.csv").exists());
    assert!(out.join("box-d_C0.1").join("plot_data.csv").exists());
}
