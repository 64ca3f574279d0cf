//! Command-line driver: `cbi validate|eval|simulate|compare|plot --config <file>`.

pub mod config;
pub mod emit;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `outputs.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for batch evaluation and simulation.
    #[arg(long, env = "CBI_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check admissibility of every parameter set.
    Validate(CommonArgs),
    /// Evaluate the analytic formulas over the query grids.
    Eval(CommonArgs),
    /// Monte Carlo estimates for the query grids.
    Simulate(CommonArgs),
    /// Formula against simulation and oracles, with pass/fail per tolerance.
    Compare(CommonArgs),
    /// SVG survival curves.
    Plot(CommonArgs),
}

#[derive(Debug, Clone, Parser)]
#[command(name = "cbi", version, about = "First jump times of CBI processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Validate(a) | Command::Eval(a) | Command::Simulate(a) | Command::Compare(a) | Command::Plot(a) => a,
        }
    }
}

/// Files written by a command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
}

fn execute_inner(cmd: &Command) -> CliResult<Outcome> {
    let args = cmd.common();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let (Some(seed), Some(mc)) = (args.seed, cfg.mc.as_mut()) {
        mc.seed = seed;
    }
    let exp = cfg.resolve()?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&exp.outputs.dir));
    let mut out = Outcome::default();
    match cmd {
        Command::Validate(_) => {
            let records = run::run_validate(&exp);
            let passed = records.iter().all(|r| r.admissible);
            out.written.push(emit::write(&dir, "validate.json", &emit::json_report("validate", passed, &records))?);
            if !passed {
                let names: Vec<&str> = records.iter().filter(|r| !r.admissible).map(|r| r.name.as_str()).collect();
                return Err(CliError::Validation(names.join(", ")));
            }
        }
        Command::Eval(_) => {
            let records = run::run_eval(&exp)?;
            out.written.push(emit::write(&dir, "eval.csv", &emit::eval_csv(&records))?);
            out.written.push(emit::write(&dir, "eval.json", &emit::json_report("eval", true, &records))?);
        }
        Command::Simulate(_) => {
            let records = run::run_simulate(&exp)?;
            out.written.push(emit::write(&dir, "simulate.csv", &emit::simulate_csv(&records))?);
            out.written.push(emit::write(&dir, "simulate.json", &emit::json_report("simulate", true, &records))?);
        }
        Command::Compare(_) => {
            let records = run::run_compare(&exp)?;
            let failed = records.iter().filter(|r| !r.passed).count();
            out.written.push(emit::write(&dir, "compare.csv", &emit::compare_csv(&records))?);
            out.written.push(emit::write(&dir, "compare.json", &emit::json_report("compare", failed == 0, &records))?);
            if failed > 0 {
                return Err(CliError::Comparison { failed });
            }
        }
        Command::Plot(_) => {
            let series = run::survival_series(&exp)?;
            out.written.push(emit::write(&dir, "plot.svg", &emit::survival_svg(&series))?);
        }
    }
    Ok(out)
}

/// Runs a command on a worker pool of the requested size.
pub fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd.common().workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::config("workers", e.to_string()))?;
            pool.install(|| execute_inner(cmd))
        }
        None => execute_inner(cmd),
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run_cli(cli: &Cli) -> i32 {
    match execute(&cli.command) {
        Ok(out) => {
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
