use std::process::ExitCode;

use clap::{Parser, Subcommand};

use incompref_cli::{load, run_and_write, CliError, Command, Overrides};

#[derive(Parser)]
#[command(name = "incompref", version, about = "Consumption-investment experiments under incomplete preferences")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// TOML experiment config (may name a base `preset`).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Built-in preset: example1_case1, example1_case2, example1_case3,
    /// example2, example2_lambda0, example3.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time steps on [0, T].
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Mean-variance frontier.
    Frontier,
    /// Realized index set on one path.
    IndexSet,
    /// Sweep the weight grid and solve for consumption.
    Solve,
    /// Portfolio decomposition and wealth replication.
    Portfolio,
    /// Hausdorff convergence of the index-set scheme.
    Convergence,
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let source = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {p}: {e}")))?),
        None => None,
    };
    let mut cfg = load(cli.preset.as_deref(), source.as_deref())?;
    cfg.apply(&Overrides { seed: cli.seed, paths: cli.paths, steps: cli.steps, out: cli.out.clone() })?;
    let cmd = match cli.verb {
        Verb::Frontier => Command::Frontier,
        Verb::IndexSet => Command::IndexSet,
        Verb::Solve => Command::Solve,
        Verb::Portfolio => Command::Portfolio,
        Verb::Convergence => Command::Convergence,
    };
    for p in run_and_write(cmd, &cfg, cli.threads)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("incompref: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
