//! Configuration-driven experiment runner for `incompref`.
//!
//! Every command maps a validated [`config::ExperimentConfig`] to a set of
//! CSV/JSON artifacts; nothing touches the disk until the whole command has
//! succeeded.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

pub use config::{load, ExperimentConfig, Overrides};
pub use error::CliError;
pub use output::Artifacts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Frontier,
    IndexSet,
    Solve,
    Portfolio,
    Convergence,
}

/// Run `cmd` on a thread pool of `threads` workers (rayon's default when
/// `None`).
pub fn run(cmd: Command, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Frontier => commands::cmd_frontier(cfg),
        Command::IndexSet => commands::cmd_index_set(cfg),
        Command::Solve => commands::cmd_solve(cfg),
        Command::Portfolio => commands::cmd_portfolio(cfg),
        Command::Convergence => commands::cmd_convergence(cfg),
    })
}

/// Run and write the artifacts into `cfg.output.dir`.
pub fn run_and_write(cmd: Command, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let a = run(cmd, cfg, threads)?;
    a.write_all(std::path::Path::new(&cfg.output.dir))
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
