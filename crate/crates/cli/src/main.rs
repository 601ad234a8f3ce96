//! `impactflow`: simulate, sweep, differentiate and check the reference
//! models from a scenario file.

mod output;
mod scenario;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impactflow::sensitivity::finite_difference_derivative;
use impactflow::zoo::{entry, ZooEntry};
use impactflow::{
    simulate, simulate_sampled, sweep, trajectory_derivative, validate_entry, word_independence_check, Comparison,
    Execution, SolverConfig,
};

use output::{CheckRecord, SensitivityRecord, SweepWordsRecord, WordRecord};
use scenario::{Outputs, Scenario};

#[derive(Debug)]
pub enum CliError {
    /// Bad scenario, flags or file system access.
    Config(String),
    /// Raised by the library while running the scenario.
    Run(impactflow::Error),
}

impl CliError {
    /// 2 for inadmissible trajectories (grazing, Zeno, horizon at an
    /// event), 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(e) if e.is_admissibility() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<impactflow::Error> for CliError {
    fn from(e: impactflow::Error) -> Self {
        CliError::Run(e)
    }
}

#[derive(Parser)]
#[command(
    name = "impactflow",
    version,
    about = "Event-driven simulation and saltation sensitivities of impacting mechanical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory: samples CSV and word JSON.
    Simulate(RunArgs),
    /// Simulate a sweep of initial conditions: outcome CSV and word table.
    Sweep(RunArgs),
    /// Derivative of the terminal state, with finite-difference oracle and
    /// word-independence verdict.
    Sensitivity(RunArgs),
    /// Model checks: mass symmetry and definiteness, constraint gradients,
    /// decoupling clauses.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    scenario: Option<PathBuf>,
    /// Zoo model name, with default parameters.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Reserved; every computation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_a: Option<f64>,
    #[arg(long)]
    tol_event: Option<f64>,
    #[arg(long)]
    tol_cluster: Option<f64>,
    #[arg(long)]
    tol_graze: Option<f64>,
}

impl Overrides {
    fn apply(&self, config: &mut SolverConfig) -> Result<(), CliError> {
        let _ = self.seed;
        for (slot, value) in [
            (&mut config.tol_a, self.tol_a),
            (&mut config.tol_event, self.tol_event),
            (&mut config.tol_cluster, self.tol_cluster),
            (&mut config.tol_graze, self.tol_graze),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        config.validate()?;
        Ok(())
    }
}

fn load(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::load(&args.scenario)?;
    args.overrides.apply(&mut scenario.config)?;
    Ok(scenario)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let s = load(args)?;
    let model = &*s.entry.model;
    let trajectory = match s.sample_step {
        Some(step) => simulate_sampled(model, &s.initial, s.horizon, Some(step), &s.config)?,
        None => simulate(model, &s.initial, s.horizon, &s.config)?,
    };
    let Outputs { trajectory: csv_name, word: json_name, .. } = &s.outputs;
    let csv = write(&args.out, csv_name, &output::trajectory_csv(&trajectory))?;
    let json = write(&args.out, json_name, &output::json(&WordRecord::new(s.entry.name, s.horizon, &trajectory)))?;
    println!("word: {}", trajectory.word);
    println!("wrote {} ({} samples)", csv.display(), trajectory.samples.len());
    println!("wrote {} ({} events)", json.display(), trajectory.word.events.len());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let s = load(args)?;
    let spec = s.sweep.as_ref().ok_or_else(|| CliError::Config("scenario has no [sweep] section".into()))?;
    let model = &*s.entry.model;
    let result = sweep(model, &s.initial, Some(&s.entry.family), spec, s.horizon, &s.config, Execution::Parallel)?;
    let csv = write(&args.out, &s.outputs.sweep, &output::sweep_csv(&result, model.dof()))?;
    let record = SweepWordsRecord::new(s.entry.name, spec.target.to_string(), s.horizon, &result);
    let json = write(&args.out, &s.outputs.words, &output::json(&record))?;
    println!("wrote {} ({} rows)", csv.display(), result.rows.len());
    println!("wrote {} ({} words)", json.display(), result.words.len());
    Ok(())
}

fn cmd_sensitivity(args: &RunArgs) -> Result<(), CliError> {
    let s = load(args)?;
    let model = &*s.entry.model;
    let trajectory = simulate_sampled(model, &s.initial, s.horizon, None, &s.config)?;
    let result = trajectory_derivative(model, &trajectory, &s.config)?;
    let fd = finite_difference_derivative(model, &s.initial, s.horizon, &s.config, s.fd_step)?;
    let independence = word_independence_check(model, &s.initial, s.horizon, &s.config)?;
    let record =
        SensitivityRecord::new(s.entry.name, s.horizon, &trajectory.initial, &result, &fd, s.fd_step, &independence);
    let json = write(&args.out, &s.outputs.sensitivity, &output::json(&record))?;
    let cmp = Comparison::new(&result.d_phi, &fd.d_phi);
    println!("word: {}", result.word);
    println!("finite-difference max relative error: {:e}", cmp.max_rel);
    println!(
        "word independence: {} (max difference {:e})",
        if independence.pass { "PASS" } else { "FAIL" },
        independence.max_difference
    );
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let (zoo_entry, out_name): (ZooEntry, String) = match (&args.scenario, &args.model) {
        (Some(path), _) => {
            let s = Scenario::load(path)?;
            (s.entry, s.outputs.check)
        }
        (None, Some(name)) => (entry(name, &Default::default())?, Outputs::default().check),
        (None, None) => unreachable!("clap requires one of --scenario and --model"),
    };
    let report = validate_entry(&zoo_entry);
    for c in &report.checks {
        println!("{} {}: {}", verdict(c.pass), c.name, c.detail);
    }
    match &report.decoupling {
        Some(d) => {
            for c in [&d.partition, &d.clause1, &d.clause2, &d.clause3] {
                println!("{} {}: {}", verdict(c.pass), c.name, c.detail);
            }
            println!("decoupling: {}", verdict(d.pass));
        }
        None => println!("decoupling: no body/limb partition declared"),
    }
    let record = CheckRecord {
        model: zoo_entry.name.to_string(),
        pass: report.pass(),
        declared_decoupled: zoo_entry.decoupled,
        decoupled: report.decoupled(),
        report: &report,
    };
    let json = write(&args.out, &out_name, &output::json(&record))?;
    println!("wrote {}", json.display());
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
