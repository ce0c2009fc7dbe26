//! inject, detect, and recover over NAPM/NAPG files.

use std::io::Write;
use std::path::Path;

use anyhow::Result;
use naper_core::guard::{GuardedEnsemble, VerdictKind, BASE_MODEL};
use naper_core::inject::{
    apply_injection, plan_injection, InjectionConfig, InjectionMode, StoreSelector,
    StoreSpace, HIGH_FAULT_RATE, LOW_FAULT_RATE,
};
use naper_core::io::{load_guard, load_model, save_guard, save_model};

use super::{out_path, require_file, usage};
use crate::{Cli, Command};

fn load_guard_set(
    base: &Path,
    redundants: &[std::path::PathBuf],
    guard: &Path,
) -> Result<GuardedEnsemble> {
    require_file(base, "base model")?;
    for r in redundants {
        require_file(r, "redundant model")?;
    }
    require_file(guard, "guard file")?;
    let base_model = load_model(base)?;
    let red_models = redundants
        .iter()
        .map(|p| load_model(p))
        .collect::<naper_core::Result<Vec<_>>>()?;
    Ok(load_guard(guard, base_model, red_models)?)
}

fn verdict_label(v: &VerdictKind) -> String {
    match v {
        VerdictKind::Healthy => "healthy".into(),
        VerdictKind::FaultInBase => "fault_in_base".into(),
        VerdictKind::FaultInRedundant(m) => format!("fault_in_r{m}"),
        VerdictKind::FaultInDelta(m) => format!("fault_in_d{m}"),
        VerdictKind::Unrecoverable => "unrecoverable".into(),
    }
}

fn save_guard_set(
    cli: &Cli,
    prefix: &str,
    guard: &GuardedEnsemble,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let base_path = out_path(&cli.out_dir, &format!("{prefix}-base.napm"));
    save_model(guard.base(), &base_path)?;
    written.push(base_path);
    for (i, r) in guard.redundants().iter().enumerate() {
        let p = out_path(&cli.out_dir, &format!("{prefix}-r{}.napm", i + 1));
        save_model(r, &p)?;
        written.push(p);
    }
    let gpath = out_path(&cli.out_dir, &format!("{prefix}-guard.napg"));
    save_guard(guard, &gpath)?;
    written.push(gpath);
    Ok(written)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::Inject {
            model,
            base,
            redundants,
            guard,
            ber,
            preset,
            mode,
            targets,
            include_metadata,
            log,
            prefix,
        } => {
            let ber = match (preset.as_deref(), ber) {
                (Some("low"), _) => LOW_FAULT_RATE,
                (Some("high"), _) => HIGH_FAULT_RATE,
                (Some(other), _) => {
                    return Err(usage(format!("unknown preset '{other}', want low|high")))
                }
                (None, Some(b)) => *b,
                (None, None) => return Err(usage("inject needs --ber or --preset")),
            };
            let mode: InjectionMode = mode.parse()?;
            let selectors = targets
                .iter()
                .map(|t| t.parse::<StoreSelector>())
                .collect::<naper_core::Result<Vec<_>>>()?;
            let seed = cli.seed.unwrap_or(0);
            let cfg = InjectionConfig {
                ber,
                mode,
                seed,
                targets: selectors,
                include_metadata: *include_metadata,
            };

            let (event, written) = match (model, base) {
                (Some(model_path), None) => {
                    require_file(model_path, "model")?;
                    let mut m = load_model(model_path)?;
                    let space = StoreSpace::of_target(&m, &cfg.targets, cfg.include_metadata);
                    let plan = plan_injection(&cfg, &space)?;
                    let event = apply_injection(&mut m, &plan, 0)?;
                    let p = out_path(&cli.out_dir, &format!("{prefix}-model.napm"));
                    save_model(&m, &p)?;
                    (event, vec![p])
                }
                (None, Some(base_path)) => {
                    let guard_path = guard
                        .as_ref()
                        .ok_or_else(|| usage("guarded inject needs --guard"))?;
                    let mut g = load_guard_set(base_path, redundants, guard_path)?;
                    let space = StoreSpace::of_target(&g, &cfg.targets, cfg.include_metadata);
                    let plan = plan_injection(&cfg, &space)?;
                    let event = apply_injection(&mut g, &plan, 0)?;
                    let written = save_guard_set(cli, prefix, &g)?;
                    (event, written)
                }
                _ => {
                    return Err(usage(
                        "inject needs exactly one of --model or --base/--redundants/--guard",
                    ))
                }
            };

            let log_path = out_path(&cli.out_dir, log);
            let mut f = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
            for line in event.log_lines() {
                writeln!(f, "{line}")?;
            }
            f.flush()?;
            println!(
                "planted {} flip(s) at ber {ber:e} -> {} (+{} files)",
                event.locations.len(),
                log_path.display(),
                written.len()
            );
            Ok(())
        }
        Command::Detect {
            base,
            redundants,
            guard,
            audit,
        } => {
            let mut g = load_guard_set(base, redundants, guard)?;
            let verdicts = if *audit {
                g.audit().verdicts
            } else {
                let mut out = Vec::new();
                for layer in 0..g.layer_count() {
                    for m in 1..=g.redundant_count() {
                        out.push(g.detect_layer(m, layer));
                    }
                }
                out
            };
            let mut faults = 0;
            for v in &verdicts {
                if v.result != VerdictKind::Healthy {
                    faults += 1;
                }
                println!("L{} {}", v.layer, verdict_label(&v.result));
            }
            println!(
                "{}: {} verdict(s), {} fault(s); comparisons={} checksums={}",
                if *audit { "audit" } else { "detect" },
                verdicts.len(),
                faults,
                g.counters().comparisons(),
                g.counters().checksums()
            );
            Ok(())
        }
        Command::Recover {
            base,
            redundants,
            guard,
            budget,
            model,
            prefix,
        } => {
            let mut g = load_guard_set(base, redundants, guard)?;
            g.audit();
            let ids: Vec<usize> = match model.as_str() {
                "all" => (0..g.model_count()).collect(),
                "base" => vec![BASE_MODEL],
                m => {
                    let id: usize = m
                        .strip_prefix('r')
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| usage(format!("bad --model '{m}', want all|base|r<m>")))?;
                    vec![id]
                }
            };
            for id in ids {
                let progress = g.recover_model(id, *budget)?;
                println!(
                    "model {id}: recovered {} layer(s), {} remaining, active={}",
                    progress.layers_recovered,
                    progress.remaining,
                    g.model_active(id)
                );
            }
            let written = save_guard_set(cli, prefix, &g)?;
            println!("wrote {} repaired file(s)", written.len());
            Ok(())
        }
        _ => unreachable!("faults::run called with a foreign command"),
    }
}
