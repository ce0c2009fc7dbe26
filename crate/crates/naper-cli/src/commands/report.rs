//! report: memory accounting table plus echoes of prior simulation and
//! bench outputs, as markdown and CSV.

use std::io::Write;
use std::time::Duration;

use anyhow::Result;
use naper_core::guard::GuardedEnsemble;
use naper_core::io::load_model;
use naper_core::model::{ModelParams, NetworkSpec};
use naper_core::strategy::{
    CbrStrategy, DroStrategy, EftStrategy, MemoryReport, NaperStrategy, ProtectionStrategy,
    TmrStrategy, UnprotectedStrategy,
};

use super::{out_path, require_file, usage};
use crate::{Cli, Command};

pub fn memory_rows(model: &ModelParams, eft_hidden: &[usize], workdir: &std::path::Path) -> Result<Vec<MemoryReport>> {
    let spec = model.spec();
    let redundant = ModelParams::init(&spec, 1);
    let naper = NaperStrategy::new(GuardedEnsemble::build(model.clone(), vec![redundant])?);
    let tmr = TmrStrategy::new(model.clone());
    let dro = DroStrategy::new(model.clone());
    let cbr = CbrStrategy::new(model.clone(), workdir, Duration::from_millis(1))?;
    let members: Result<Vec<ModelParams>, naper_core::Error> = eft_hidden
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let mspec = NetworkSpec::new(vec![spec.input_dim(), w, spec.class_count()])?;
            Ok(ModelParams::init(&mspec, 20 + i as u64))
        })
        .collect();
    let eft = EftStrategy::new(members?)?;
    let unprotected = UnprotectedStrategy::new(model.clone());
    Ok(vec![
        tmr.memory_report(),
        dro.memory_report(),
        cbr.memory_report(),
        eft.memory_report(),
        naper.memory_report(),
        unprotected.memory_report(),
    ])
}

pub fn run(cli: &Cli) -> Result<()> {
    let Command::Report {
        model,
        summaries,
        bench,
        eft_hidden,
    } = &cli.cmd
    else {
        unreachable!("report::run called with a foreign command")
    };
    if model.is_none() && summaries.is_empty() && bench.is_none() {
        return Err(usage(
            "report needs at least one input: --model, --summaries, or --bench",
        ));
    }

    let mut md = String::from("# Protection scheme report\n");

    if let Some(model_path) = model {
        require_file(model_path, "model")?;
        let m = load_model(model_path)?;
        let rows = memory_rows(&m, eft_hidden, &cli.out_dir)?;
        let csv_path = out_path(&cli.out_dir, "memory.csv");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
        writeln!(f, "#schema=1")?;
        writeln!(f, "{}", MemoryReport::csv_header())?;
        for r in &rows {
            writeln!(f, "{}", r.csv_row())?;
        }
        f.flush()?;

        md.push_str(&format!(
            "\n## Memory overhead ({} parameters)\n\n",
            m.param_count()
        ));
        md.push_str("| scheme | base bytes | redundancy bytes | metadata bytes | overhead % |\n");
        md.push_str("|--------|-----------:|-----------------:|---------------:|-----------:|\n");
        for r in &rows {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {:.1} |\n",
                r.strategy,
                r.base_bytes,
                r.redundancy_bytes,
                r.metadata_bytes,
                r.overhead_percent()
            ));
        }
    }

    if !summaries.is_empty() {
        md.push_str("\n## Simulation summaries\n\n```\n");
        for path in summaries {
            require_file(path, "summary")?;
            md.push_str(&std::fs::read_to_string(path)?);
        }
        md.push_str("```\n");
    }

    if let Some(bench_path) = bench {
        require_file(bench_path, "bench csv")?;
        md.push_str("\n## Bench results\n\n```\n");
        md.push_str(&std::fs::read_to_string(bench_path)?);
        md.push_str("```\n");
    }

    let md_path = out_path(&cli.out_dir, "report.md");
    std::fs::write(&md_path, &md)?;
    println!("-> {}", md_path.display());
    Ok(())
}
