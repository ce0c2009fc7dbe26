//! bench: wall-clock fault-free detection+inference per strategy with
//! pass counters, normalized to the TMR median.

use std::io::Write;
use std::time::{Duration, Instant};

use anyhow::Result;
use naper_core::guard::GuardedEnsemble;
use naper_core::model::{ModelParams, NetworkSpec};
use naper_core::sim::StrategyKind;
use naper_core::strategy::{
    CbrStrategy, DroStrategy, EftStrategy, NaperStrategy, ProtectionStrategy, TmrStrategy,
    UnprotectedStrategy,
};

use super::{out_path, usage};
use crate::{Cli, Command};

pub struct BenchRow {
    pub strategy: String,
    pub params: usize,
    pub comparison_passes: u64,
    pub checksum_passes: u64,
    pub median_us: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn bench_strategies(
    kinds: &[StrategyKind],
    sizes: &[usize],
    trials: usize,
    warmup: usize,
    seed: u64,
    workdir: &std::path::Path,
) -> Result<Vec<BenchRow>> {
    if trials < 3 {
        return Err(usage("bench needs --trials >= 3"));
    }
    let spec = NetworkSpec::new(sizes.to_vec())?;
    let base = ModelParams::init(&spec, seed);
    let redundant = ModelParams::init(&spec, seed.wrapping_add(1));
    let x: Vec<f32> = (0..spec.input_dim()).map(|i| (i as f32 * 0.37).sin()).collect();

    let mut rows = Vec::new();
    for kind in kinds {
        let mut strategy: Box<dyn ProtectionStrategy> = match kind {
            StrategyKind::Naper => Box::new(NaperStrategy::new(GuardedEnsemble::build(
                base.clone(),
                vec![redundant.clone()],
            )?)),
            StrategyKind::Tmr => Box::new(TmrStrategy::new(base.clone())),
            StrategyKind::Dro => Box::new(DroStrategy::new(base.clone())),
            StrategyKind::Cbr => Box::new(CbrStrategy::new(
                base.clone(),
                workdir,
                Duration::from_millis(1),
            )?),
            StrategyKind::Eft => {
                let members: Result<Vec<ModelParams>, naper_core::Error> = [16usize, 32, 64]
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let mspec =
                            NetworkSpec::new(vec![spec.input_dim(), w, spec.class_count()])?;
                        Ok(ModelParams::init(&mspec, seed.wrapping_add(10 + i as u64)))
                    })
                    .collect();
                Box::new(EftStrategy::new(members?)?)
            }
            StrategyKind::Unprotected => Box::new(UnprotectedStrategy::new(base.clone())),
        };
        for _ in 0..warmup {
            strategy.step(&x)?;
        }
        let mut samples = Vec::with_capacity(trials);
        let mut last = None;
        for _ in 0..trials {
            let t = Instant::now();
            let out = strategy.step(&x)?;
            samples.push(t.elapsed().as_secs_f64() * 1e6);
            last = Some(out);
        }
        let out = last.expect("trials >= 3");
        rows.push(BenchRow {
            strategy: kind.name().into(),
            params: base.param_count(),
            comparison_passes: out.comparison_passes,
            checksum_passes: out.checksum_passes,
            median_us: median(samples),
        });
    }
    Ok(rows)
}

pub fn render_csv(rows: &[BenchRow], trials: usize) -> Result<String> {
    let tmr = rows
        .iter()
        .find(|r| r.strategy == "tmr")
        .ok_or_else(|| usage("bench needs tmr among --strategies for normalization"))?;
    let mut out = String::from("#schema=1\n");
    out.push_str(
        "strategy,params,trials,comparison_passes,checksum_passes,median_us,normalized_to_tmr,comparison_ratio_vs_tmr\n",
    );
    for r in rows {
        let ratio = r.comparison_passes as f64 / tmr.comparison_passes as f64;
        out.push_str(&format!(
            "{},{},{},{},{},{:.1},{:.4},{}\n",
            r.strategy,
            r.params,
            trials,
            r.comparison_passes,
            r.checksum_passes,
            r.median_us,
            r.median_us / tmr.median_us,
            ratio
        ));
    }
    Ok(out)
}

pub fn run(cli: &Cli) -> Result<()> {
    let Command::Bench {
        strategies,
        layers,
        trials,
        warmup,
        name,
    } = &cli.cmd
    else {
        unreachable!("bench::run called with a foreign command")
    };
    let kinds = strategies
        .iter()
        .map(|s| s.parse::<StrategyKind>())
        .collect::<naper_core::Result<Vec<_>>>()?;
    let seed = cli.seed.unwrap_or(5);
    let rows = bench_strategies(&kinds, layers, *trials, *warmup, seed, &cli.out_dir)?;
    let csv = render_csv(&rows, *trials)?;
    let path = out_path(&cli.out_dir, name);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    f.write_all(csv.as_bytes())?;
    f.flush()?;
    print!("{csv}");
    println!("-> {}", path.display());
    Ok(())
}
