//! train, gen-data, and build-guard.

use anyhow::Result;
use naper_core::data::{gen_synthetic, load_csv};
use naper_core::guard::GuardedEnsemble;
use naper_core::io::{load_model, save_guard, save_model};
use naper_core::model::NetworkSpec;
use naper_core::nn::{evaluate, train_independent, TrainConfig};

use super::{out_path, require_file, usage};
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::Train {
            layers,
            data,
            classes,
            seeds,
            epochs,
            lr,
            batch,
            prefix,
        } => {
            require_file(data, "dataset")?;
            if seeds.is_empty() {
                return Err(usage("train needs at least one --seeds value"));
            }
            let dataset = load_csv(data, *classes)?;
            let spec = NetworkSpec::new(layers.clone())?;
            for &seed in seeds {
                let seed = cli.seed.map(|s| s.wrapping_add(seed)).unwrap_or(seed);
                let cfg = TrainConfig {
                    seed,
                    epochs: *epochs,
                    learning_rate: *lr,
                    batch_size: *batch,
                };
                let model = train_independent(&spec, &dataset, &cfg)?;
                let acc = evaluate(&[&model], &dataset)?;
                let path = out_path(&cli.out_dir, &format!("{prefix}-s{seed}.napm"));
                save_model(&model, &path)?;
                println!(
                    "trained seed {seed}: train accuracy {acc:.4} -> {}",
                    path.display()
                );
            }
            Ok(())
        }
        Command::GenData {
            seed,
            samples,
            dim,
            classes,
            spread,
            name,
        } => {
            let seed = cli.seed.unwrap_or(*seed);
            let data = gen_synthetic(seed, *samples, *dim, *classes, *spread)?;
            let path = out_path(&cli.out_dir, name);
            data.save_csv(&path)?;
            println!(
                "wrote {} samples x {} features, {} classes -> {}",
                data.n_samples(),
                data.n_features(),
                data.n_classes(),
                path.display()
            );
            Ok(())
        }
        Command::BuildGuard {
            base,
            redundants,
            name,
        } => {
            require_file(base, "base model")?;
            if redundants.is_empty() {
                return Err(usage("build-guard needs at least one --redundants file"));
            }
            for r in redundants {
                require_file(r, "redundant model")?;
            }
            let base_model = load_model(base)?;
            let red_models = redundants
                .iter()
                .map(|p| load_model(p))
                .collect::<naper_core::Result<Vec<_>>>()?;
            let guard = GuardedEnsemble::build(base_model, red_models)?;
            let path = out_path(&cli.out_dir, name);
            save_guard(&guard, &path)?;
            println!(
                "guard over {} layers, {} redundant(s) -> {}",
                guard.layer_count(),
                guard.redundant_count(),
                path.display()
            );
            Ok(())
        }
        _ => unreachable!("models::run called with a foreign command"),
    }
}
