//! Subcommand handlers. Usage problems are surfaced as core config
//! errors so main can map them to exit code 2.

mod bench;
mod faults;
mod models;
mod report;
mod sim_cmd;

use std::path::{Path, PathBuf};

use anyhow::Result;
use naper_core::Error;

use crate::{Cli, Command};

pub fn dispatch(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.cmd {
        Command::Train { .. } | Command::GenData { .. } | Command::BuildGuard { .. } => {
            models::run(&cli)
        }
        Command::Inject { .. } | Command::Detect { .. } | Command::Recover { .. } => {
            faults::run(&cli)
        }
        Command::Simulate { .. } => sim_cmd::run(&cli),
        Command::Bench { .. } => bench::run(&cli),
        Command::Report { .. } => report::run(&cli),
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Error::Config(msg.into()))
}

/// Read-side paths must exist before dispatching any work.
pub(crate) fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

pub(crate) fn out_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}
