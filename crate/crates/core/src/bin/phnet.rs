use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phnet::scenario::{self, Command, ExperimentParams, RunOptions, Scenario};

/// Steady-state analysis and simulation of port-Hamiltonian networks.
#[derive(Parser)]
#[command(name = "phnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the steady-state feasibility problem (and dispatch for grids).
    Check(Common),
    /// Integrate the closed loop and write a trajectory CSV.
    Simulate(Common),
    /// Compute the optimal input allocation and cross-check it.
    Dispatch(Common),
    /// Check the scenario's matrices, energies and network numerically.
    Validate(Common),
    /// Estimate the fraction of perturbed starts that settle.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Distance of the perturbed starts from the equilibrium.
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Run the experiments listed in the scenario.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run independent experiments concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Directory for reports and trajectories; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Settle tolerance on the output error.
    #[arg(long)]
    tol: Option<f64>,
    /// Simulate even when no feasible steady state exists.
    #[arg(long)]
    allow_infeasible: bool,
    /// Start the controller at its steady state plus uniform noise of this half-width.
    #[arg(long)]
    warm_start: Option<f64>,
}

impl Common {
    fn options(&self, parallel: bool) -> RunOptions {
        RunOptions {
            out_dir: self.out.clone(),
            seed: self.seed,
            tol: self.tol,
            allow_infeasible: self.allow_infeasible,
            parallel,
            warm_start: self.warm_start,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, command, params, parallel) = match cli.command {
        Cmd::Check(c) => (c, Some(Command::Check), ExperimentParams::default(), false),
        Cmd::Simulate(c) => (c, Some(Command::Simulate), ExperimentParams::default(), false),
        Cmd::Dispatch(c) => (c, Some(Command::Dispatch), ExperimentParams::default(), false),
        Cmd::Validate(c) => (c, Some(Command::Validate), ExperimentParams::default(), false),
        Cmd::Probe { common, radius, trials } => (
            common,
            Some(Command::Probe),
            ExperimentParams { radius: Some(radius), trials: Some(trials), ..Default::default() },
            false,
        ),
        Cmd::Run { common, parallel } => (common, None, ExperimentParams::default(), parallel),
    };
    let sc = match Scenario::load(&common.scenario) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(scenario::exit_code(&e) as u8);
        }
    };
    let opts = common.options(parallel);
    let reports = match command {
        Some(c) => vec![scenario::run_command(&sc, c, &params, &opts)],
        None => scenario::run_experiments(&sc, &opts),
    };
    for r in &reports {
        if opts.out_dir.is_none() {
            println!("{}", r.to_json());
        }
        eprintln!("{}", scenario::summarize(r));
    }
    let code = reports.iter().map(|r| r.exit_code).max().unwrap_or(0);
    ExitCode::from(code as u8)
}
