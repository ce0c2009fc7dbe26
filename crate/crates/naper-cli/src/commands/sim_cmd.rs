//! simulate: scenario config in, trace.jsonl + summary.csv out.

use std::io::Write;

use anyhow::Result;
use naper_core::sim::{run_sim, SimConfig, SimTrace};

use super::{out_path, require_file, usage};
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let Command::Simulate { scenario } = &cli.cmd else {
        unreachable!("sim_cmd::run called with a foreign command")
    };
    let path = scenario
        .as_ref()
        .or(cli.config.as_ref())
        .ok_or_else(|| usage("simulate needs --scenario or --config"))?;
    require_file(path, "scenario config")?;
    let mut cfg = SimConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.workdir = cli.out_dir.clone();
    let trace = run_sim(&cfg)?;
    write_outputs(cli, &trace)?;
    println!(
        "{}: {} frames, deadlines met {:.1}%, mean accuracy proxy {:.4}",
        trace.summary.strategy,
        trace.summary.frames,
        trace.summary.deadline_met_pct,
        trace.summary.mean_accuracy_proxy
    );
    Ok(())
}

fn write_outputs(cli: &Cli, trace: &SimTrace) -> Result<()> {
    let trace_path = out_path(&cli.out_dir, "trace.jsonl");
    std::fs::write(&trace_path, trace.to_jsonl())?;
    let summary_path = out_path(&cli.out_dir, "summary.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    writeln!(f, "#schema=1")?;
    writeln!(f, "{}", SimTrace::summary_csv_header())?;
    writeln!(f, "{}", trace.summary_csv_row())?;
    f.flush()?;
    Ok(())
}
