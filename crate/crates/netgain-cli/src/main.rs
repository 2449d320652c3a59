//! `netgain` — gain analysis and weight allocation for diffusion networks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netgain::allocator::OptimizeOptions;
use netgain_cli::{
    cmd_analyze, cmd_bound, cmd_check_signed, cmd_optimize, cmd_simulate, read_file,
    OptimizeArgs, SimulateArgs, EXIT_INPUT,
};

#[derive(Parser)]
#[command(
    name = "netgain",
    version,
    about = "Analyze the induced L2 gain of linear diffusion networks, certify it, \
             allocate edge-weight budgets, and verify gains in simulation",
    after_help = "Exit codes: 0 success, 1 input error, 2 mathematically infinite or \
                  infeasible result."
)]
struct Cli {
    /// Network JSON file: {"n": .., "edges": [{"u", "v", "w"}, ..], "ports": [..]}
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Output file (written atomically); stdout when omitted
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Seed for randomized optimizer restarts
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Relative improvement tolerance of iterative solvers
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the gain of a fixed-weight network (gain matrix, LMI and
    /// Riccati margins, connectivity bound, port resistances)
    Analyze,

    /// Allocate a weight budget over the edges to minimize the gain
    Optimize {
        /// Total edge-weight budget (the simplex level c)
        #[arg(long)]
        budget: f64,

        /// Cross-check against the exhaustive lattice oracle (m <= 5)
        #[arg(long)]
        oracle: bool,

        /// Lattice spacing of the oracle, as a fraction of the budget
        #[arg(long, default_value_t = 0.01)]
        oracle_step: f64,

        /// Iteration cap per restart
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,

        /// Random restarts in addition to the uniform start
        #[arg(long, default_value_t = 3)]
        restarts: usize,

        /// Initial step size (defaults to the budget)
        #[arg(long)]
        step0: Option<f64>,
    },

    /// Integrate the network under a disturbance signal and emit the trace
    /// CSV with running-norm columns
    Simulate {
        /// Signal JSON file: {"breakpoints": [..], "values": [[..]], "after": [..]}
        #[arg(long)]
        signal: PathBuf,

        /// Fixed integration step
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,

        /// Horizon; defaults to the input end plus twenty decay time
        /// constants of the slowest network mode
        #[arg(long)]
        t_final: Option<f64>,

        /// Gain level for the verification columns; defaults to the
        /// certified gain of the network
        #[arg(long)]
        gamma: Option<f64>,
    },

    /// Check positive semidefiniteness of a Laplacian with negative edges
    CheckSigned {
        /// Skip the analytic one-negative-edge threshold and report the
        /// eigenvalue verdict only
        #[arg(long)]
        numeric_only: bool,
    },

    /// Connectivity upper bound on the gain: lambda_max(E E^T) / lambda_2
    Bound,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, netgain_cli::CliError> {
    let input = cli
        .input
        .as_ref()
        .ok_or_else(|| netgain_cli::CliError::Input("--input is required".into()))?;
    let input_text = read_file(input)?;
    let output = cli.output.as_ref();

    let outcome = match cli.command {
        Command::Analyze => cmd_analyze(&input_text, output)?,
        Command::Optimize {
            budget,
            oracle,
            oracle_step,
            max_iters,
            restarts,
            step0,
        } => {
            let args = OptimizeArgs {
                budget,
                oracle,
                oracle_step,
                options: OptimizeOptions {
                    max_iters,
                    rtol: cli.tol,
                    restarts,
                    step0,
                    seed: cli.seed,
                    ..OptimizeOptions::default()
                },
            };
            cmd_optimize(&input_text, output, &args)?
        }
        Command::Simulate {
            signal,
            dt,
            t_final,
            gamma,
        } => {
            let signal_text = read_file(&signal)?;
            let args = SimulateArgs { dt, t_final, gamma };
            cmd_simulate(&input_text, &signal_text, output, &args)?
        }
        Command::CheckSigned { numeric_only } => {
            cmd_check_signed(&input_text, output, numeric_only)?
        }
        Command::Bound => cmd_bound(&input_text, output)?,
    };
    Ok(outcome.exit_code)
}
