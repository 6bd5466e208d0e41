use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use influence_cli::commands::{self, Source};
use influence_cli::CliError;
use influence_core::verification::Suite;

/// Budget allocation and open-loop equilibria for competitive influence
/// campaigns on social networks.
///
/// Exit codes: 0 ok, 1 verification failure, 2 invalid input, 3 infeasible
/// plan, 4 wrong game mode, 5 hypothesis check failure, 6 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "influence-game", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the opinion trajectory under given budget plans.
    Simulate {
        scenario: Option<PathBuf>,
        #[arg(long)]
        paper_example: bool,
        /// Plans file; all-zero plans when omitted.
        #[arg(long)]
        plans: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimal plan of a single-player game.
    Solve {
        scenario: Option<PathBuf>,
        #[arg(long)]
        paper_example: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// No-regret learning towards an open-loop equilibrium.
    Equilibrate {
        scenario: Option<PathBuf>,
        #[arg(long)]
        paper_example: bool,
        /// Iteration count; overrides the scenario.
        #[arg(long = "T", alias = "iterations")]
        iterations: Option<usize>,
        /// Prefix of `<prefix>.trace.csv` and `<prefix>.result.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run property suites against independent oracles.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemmas,
    Gradients,
    Oracles,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Lemmas => Suite::Lemmas,
            SuiteArg::Gradients => Suite::Gradients,
            SuiteArg::Oracles => Suite::Oracles,
            SuiteArg::All => Suite::All,
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate {
            scenario,
            paper_example,
            plans,
            samples,
            out,
        } => commands::simulate(&Source::new(scenario, paper_example)?, plans.as_deref(), samples, &out),
        Command::Solve {
            scenario,
            paper_example,
            out,
        } => commands::solve(&Source::new(scenario, paper_example)?, &out),
        Command::Equilibrate {
            scenario,
            paper_example,
            iterations,
            out,
        } => commands::equilibrate_cmd(&Source::new(scenario, paper_example)?, iterations, &out),
        Command::Verify { suite, seed, out } => commands::verify(suite.into(), seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
