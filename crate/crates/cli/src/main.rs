//! `nsrl`: runs the building-control experiments from a config file.
//!
//! Precedence: built-in defaults, then `--config`, then flags.
//! Exit codes: 0 ok, 1 usage or config, 2 parse, 3 no plan, 4 training failure.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use nsrl_core::planner::{emit_pddl, parse_pddl, solve, Atoms, PlanError};
use nsrl_core::sim::{episode, toy_price_path, ConstantSetpoint, Controller, PriceScenario};
use nsrl_core::training::{
    evaluate_controllers, run_mfrl, toy_policy, train_dpc, write_train_log, RbcController, TrainingError,
};
use nsrl_core::worldmodel::{learn_model, planning_problem, probe, write_probe_csv};
use thiserror::Error;

use config::{parse_months, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no plan")]
    NoPlan,
    #[error("training failed: {0}")]
    Training(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::NoPlan => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Config(m) => CliError::Config(m),
            other => CliError::Training(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nsrl", version, about = "Interpretable building-control experiments")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory for run outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Months to evaluate, e.g. `6`, `3-12` or `1,6-8`.
    #[arg(long, global = true, value_parser = parse_month_list)]
    months: Option<MonthList>,
    /// Toy price scenario for `dpc`: uniform or spike.
    #[arg(long, global = true)]
    scenario: Option<PriceScenario>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone)]
struct MonthList(Vec<u32>);

fn parse_month_list(text: &str) -> Result<MonthList, String> {
    parse_months(text).map(MonthList)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train warm- and cold-started trees and the MLP, then tabulate costs.
    Mfrl,
    /// Probe the simulator, learn action models, emit PDDL and plan.
    Ilp,
    /// Train an LNN policy through the toy simulator.
    Dpc,
    /// Solve a PDDL domain and problem; prints the plan or NO PLAN.
    Plan { domain: PathBuf, problem: PathBuf },
    /// Evaluate the precooling rule against a constant 20 °C setpoint.
    EvalRbc,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::NoPlan) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Plan { domain, problem } = &cli.command {
        return cmd_plan(domain, problem);
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(MonthList(m)) = cli.months {
        cfg.months = Some(m);
    }
    if let Some(s) = cli.scenario {
        cfg.scenario = s;
    }
    cfg.mfrl.train.seed = cfg.seed;
    cfg.dpc.seed = cfg.seed;
    if let Some(m) = &cfg.months {
        cfg.mfrl.months = m.clone();
    }
    let resolved = cfg.resolve()?;
    let name = match cli.command {
        Command::Mfrl => "mfrl",
        Command::Ilp => "ilp",
        Command::Dpc => "dpc",
        Command::EvalRbc => "eval-rbc",
        Command::Plan { .. } => unreachable!(),
    };
    let dir = fresh_run_dir(&resolved.run.out_dir, name)?;
    info!("writing {name} artifacts to {}", dir.display());
    let echo = serde_json::to_string_pretty(&resolved.run).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("config.json"), echo + "\n")?;
    match cli.command {
        Command::Mfrl => cmd_mfrl(&resolved, &dir),
        Command::Ilp => cmd_ilp(&resolved, &dir),
        Command::Dpc => cmd_dpc(&resolved, &dir),
        Command::EvalRbc => cmd_eval_rbc(&resolved, &dir),
        Command::Plan { .. } => unreachable!(),
    }?;
    println!("{}", dir.display());
    Ok(())
}

/// `<parent>/<command>-NNN` for the first unused `NNN`; never reuses a directory.
fn fresh_run_dir(parent: &Path, command: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    for n in 1..100_000 {
        let dir = parent.join(format!("{command}-{n:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::Io(format!("{}: {e}", dir.display()))),
        }
    }
    Err(CliError::Io(format!("no free run directory under {}", parent.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_mfrl(r: &config::Resolved, dir: &Path) -> Result<(), CliError> {
    let out = run_mfrl(&r.env, &r.run.mfrl)?;
    write(&dir.join("cost_table.csv"), out.table.to_csv())?;
    for (name, tree) in [
        ("ddt_warm_start", &out.warm_start),
        ("ddt_warm", &out.warm.policy),
        ("ddt_cold_start", &out.cold_start),
        ("ddt_cold", &out.cold.policy),
    ] {
        write(&dir.join(format!("{name}.json")), tree.to_json() + "\n")?;
        write(&dir.join(format!("{name}.txt")), tree.render())?;
    }
    let mlp = serde_json::to_string(&out.mlp.policy).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("mlp.json"), mlp + "\n")?;
    for (name, log) in [("warm", &out.warm.log), ("cold", &out.cold.log), ("mlp", &out.mlp.log)] {
        write_train_log(log, create(&dir.join(format!("train_log_{name}.csv")))?)?;
    }
    Ok(())
}

fn cmd_eval_rbc(r: &config::Resolved, dir: &Path) -> Result<(), CliError> {
    let months = r.run.months.clone().unwrap_or_else(|| (1..=12).collect());
    let rbc = RbcController::default();
    let c20 = ConstantSetpoint::new(20.0);
    let controllers: [&dyn Controller; 2] = [&rbc, &c20];
    let table = evaluate_controllers(&r.env, &controllers, &months)?;
    write(&dir.join("cost_table.csv"), table.to_csv())?;
    for &m in &months {
        let trace = episode(&r.env, &rbc, m).map_err(|e| CliError::Training(e.to_string()))?;
        trace
            .write_csv(create(&dir.join(format!("trace_rbc_{m:02}.csv")))?)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    print!("{}", table.to_csv());
    Ok(())
}

fn cmd_dpc(r: &config::Resolved, dir: &Path) -> Result<(), CliError> {
    let run = &r.run;
    let prices = toy_price_path(&run.toy, run.scenario);
    let policy = toy_policy(run.scenario, &run.dpc)?;
    match train_dpc(&run.toy, &prices, &policy, &run.dpc) {
        Ok(out) => {
            write(&dir.join("rule.txt"), format!("{}\n", out.crisp))?;
            write(&dir.join("policy.txt"), out.policy.formula.to_annotated() + "\n")?;
            out.trajectory
                .write_csv(create(&dir.join("trajectory.csv"))?)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_train_log(&out.log, create(&dir.join("train_log.csv"))?)?;
            println!("{}", out.crisp);
            Ok(())
        }
        Err(TrainingError::NotCrisp {
            episodes,
            source,
            relaxed,
            log,
        }) => {
            write(&dir.join("policy.txt"), relaxed + "\n")?;
            write_train_log(&log, create(&dir.join("train_log.csv"))?)?;
            Err(CliError::Training(format!(
                "policy is not crisp after {episodes} episodes: {source}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_ilp(r: &config::Resolved, dir: &Path) -> Result<(), CliError> {
    let ilp = &r.run.ilp;
    let ctx = |e: nsrl_core::worldmodel::WorldModelError| CliError::Training(format!("ilp: {e}"));
    let actions = if ilp.actions.is_empty() {
        r.vocabulary.actions.iter().map(|a| a.name.clone()).collect()
    } else {
        ilp.actions.clone()
    };
    let report = probe(&ilp.simulator, &r.vocabulary, &actions).map_err(ctx)?;
    write_probe_csv(&report.records, create(&dir.join("probe.csv"))?).map_err(ctx)?;
    let model = learn_model(&report.records, &ilp.learn).map_err(ctx)?;
    let mut rules = String::new();
    for a in &model {
        match &a.strips {
            Some(s) => {
                let list = |xs: &Atoms| xs.iter().cloned().collect::<Vec<_>>().join(", ");
                rules += &format!(
                    "{}: precondition {}; add {{{}}}; delete {{{}}}\n",
                    s.name,
                    a.precondition.crisp,
                    list(&s.add),
                    list(&s.del)
                );
            }
            None => rules += &format!("{}: never changes the state\n", a.precondition.crisp),
        }
    }
    write(&dir.join("rules.txt"), rules)?;

    let predicates = r.vocabulary.predicate_names();
    let goal_pos: Atoms = ilp.goal.iter().filter(|(_, &v)| v).map(|(k, _)| k.clone()).collect();
    let goal_neg: Atoms = ilp.goal.iter().filter(|(_, &v)| !v).map(|(k, _)| k.clone()).collect();
    let problem = planning_problem(&ilp.domain, &predicates, &model, &ilp.initial, goal_pos, goal_neg).map_err(ctx)?;
    let (domain_text, problem_text) = emit_pddl(&problem);
    write(&dir.join("domain.pddl"), &domain_text)?;
    write(&dir.join("problem.pddl"), &problem_text)?;
    let reparsed = parse_pddl(&domain_text, &problem_text).map_err(|e| CliError::Parse(e.to_string()))?;
    if reparsed != problem {
        return Err(CliError::Parse("emitted PDDL does not parse back to the same problem".into()));
    }
    let plan = solve(&problem).map_err(|e| CliError::Training(format!("planner: {e}")))?;
    match plan {
        Some(steps) => {
            let text: String = steps.iter().map(|s| format!("{s}\n")).collect();
            write(&dir.join("plan.txt"), &text)?;
            print!("{text}");
            Ok(())
        }
        None => {
            write(&dir.join("plan.txt"), "NO PLAN\n")?;
            println!("NO PLAN");
            Err(CliError::NoPlan)
        }
    }
}

fn cmd_plan(domain: &Path, problem: &Path) -> Result<(), CliError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
    let (d, p) = (read(domain)?, read(problem)?);
    let parsed = parse_pddl(&d, &p).map_err(|e| match e {
        PlanError::Syntax { .. } | PlanError::Unsupported { .. } => CliError::Parse(e.to_string()),
        other => CliError::Parse(other.to_string()),
    })?;
    let plan = solve(&parsed).map_err(|e| CliError::Parse(e.to_string()))?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match plan {
        Some(steps) => {
            for s in steps {
                writeln!(w, "{s}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            Ok(())
        }
        None => {
            writeln!(w, "NO PLAN").map_err(|e| CliError::Io(e.to_string()))?;
            Err(CliError::NoPlan)
        }
    }
}
