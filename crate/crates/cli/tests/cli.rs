use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nsrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsrl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("nsrl runs")
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn mfrl_single_month_is_one_column_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let out = nsrl(tmp.path(), &["mfrl", "--months", "6", "--out", "runs"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = read(tmp.path().join("runs/mfrl-001/cost_table.csv"));
    let b = read(tmp.path().join("runs/mfrl-002/cost_table.csv"));
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "controller,Jun");
    let rows: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["RBC", "DDT-warm", "DDT-cold", "MLP"]);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 2));
    for f in ["ddt_warm.json", "ddt_cold.json", "mlp.json", "train_log_warm.csv", "config.json"] {
        assert!(tmp.path().join("runs/mfrl-001").join(f).exists(), "{f}");
    }
    assert_eq!(
        read(tmp.path().join("runs/mfrl-001/ddt_cold.json")),
        read(tmp.path().join("runs/mfrl-002/ddt_cold.json"))
    );
}

#[test]
fn ilp_plans_the_switch_pull() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsrl(tmp.path(), &["ilp", "--out", "r"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("r/ilp-001");
    assert_eq!(read(run.join("plan.txt")), "pull_switch\n");
    assert!(read(run.join("probe.csv")).lines().count() > 1);
    assert!(read(run.join("domain.pddl")).contains("(:action pull_switch"));

    // the emitted files solve through `plan` as well
    let d = run.join("domain.pddl");
    let p = run.join("problem.pddl");
    let out = nsrl(tmp.path(), &["plan", d.to_str().unwrap(), p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "pull_switch\n");
}

#[test]
fn dpc_uniform_writes_crisp_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsrl(tmp.path(), &["dpc", "--scenario", "uniform", "--out", "r"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("r/dpc-001");
    assert_eq!(read(run.join("rule.txt")).trim(), "Implies(Hot(x),TurnACOn(x))");
    let traj = read(run.join("trajectory.csv"));
    assert_eq!(traj.lines().next(), Some("step,T,u,price,step_cost"));
    assert_eq!(traj.lines().count(), 11);
    assert_eq!(read(run.join("train_log.csv")).lines().count(), 201);
}

const DOMAIN: &str = "(define (domain d)
  (:requirements :strips :negative-preconditions)
  (:constants x)
  (:predicates (a ?o) (b ?o))
  (:action flip
    :parameters ()
    :precondition (and (a x))
    :effect (and (not (a x)))))
";

#[test]
fn plan_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("d.pddl"), DOMAIN).unwrap();
    fs::write(
        dir.join("solvable.pddl"),
        "(define (problem p) (:domain d) (:init (a x)) (:goal (and (not (a x)))))",
    )
    .unwrap();
    fs::write(
        dir.join("stuck.pddl"),
        "(define (problem p) (:domain d) (:init (a x)) (:goal (and (b x))))",
    )
    .unwrap();
    fs::write(dir.join("broken.pddl"), "(define (problem p) (:domain d)").unwrap();

    let out = nsrl(dir, &["plan", "d.pddl", "solvable.pddl"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "flip\n");

    let out = nsrl(dir, &["plan", "d.pddl", "stuck.pddl"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "NO PLAN\n");

    let out = nsrl(dir, &["plan", "d.pddl", "broken.pddl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn bad_configs_exit_one_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("unknown.json"), r#"{"bogus": 1}"#).unwrap();
    fs::write(dir.join("schema.json"), r#"{"schema_version": 9, "out_dir": "r"}"#).unwrap();
    fs::write(dir.join("env.json"), r#"{"env_path": "missing.json", "out_dir": "r"}"#).unwrap();
    for cfg in ["unknown.json", "schema.json", "env.json", "absent.json"] {
        let out = nsrl(dir, &["mfrl", "--config", cfg]);
        assert_eq!(out.status.code(), Some(1), "{cfg}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("config"), "{cfg}");
    }
    assert!(!dir.join("r").exists());
    assert_eq!(nsrl(dir, &["mfrl", "--months", "0"]).status.code(), Some(1));
    assert_eq!(nsrl(dir, &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn config_file_and_flags_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("run.json"), r#"{"out_dir": "from-file", "months": [1, 7]}"#).unwrap();
    let out = nsrl(dir, &["eval-rbc", "--config", "run.json", "--months", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.join("from-file/eval-rbc-001");
    let table = read(run.join("cost_table.csv"));
    assert_eq!(table.lines().next(), Some("controller,Jul"));
    assert!(run.join("trace_rbc_07.csv").exists());
    let echoed: serde_json::Value = serde_json::from_str(&read(run.join("config.json"))).unwrap();
    assert_eq!(echoed["months"], serde_json::json!([7]));
}

#[test]
fn environment_file_is_loaded() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir(dir.join("cfg")).unwrap();
    let env = nsrl_core::sim::EnvConfig {
        days: 2,
        ..Default::default()
    };
    fs::write(dir.join("cfg/building.json"), serde_json::to_string(&env).unwrap()).unwrap();
    fs::write(dir.join("cfg/run.json"), r#"{"env_path": "building.json", "out_dir": "r"}"#).unwrap();
    let out = nsrl(dir, &["eval-rbc", "--config", "cfg/run.json", "--months", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // two days of hourly steps plus the header
    let trace = read(dir.join("r/eval-rbc-001/trace_rbc_06.csv"));
    assert_eq!(trace.lines().count(), 49);
}
