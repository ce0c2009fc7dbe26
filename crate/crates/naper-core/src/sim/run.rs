//! The virtual-time frame loop. Per frame: arrival, scheduled faults
//! applied before detection, the strategy's real detection+inference on
//! real (possibly corrupted) stores, costs charged from the profile,
//! then remaining slack until the next arrival filled with recovery
//! chunks, never split mid-layer.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FaultTargets, SimConfig, StrategyKind};
use super::profile::CostProfile;
use super::select::select_models;
use super::trace::{FrameRecord, SimEvent, SimSummary, SimTrace};
use super::AccuracyTable;
use crate::data::{gen_synthetic, load_csv, Dataset};
use crate::guard::GuardedEnsemble;
use crate::inject::{
    apply_injection, plan_injection, FaultTarget, InjectionConfig, StoreSelector, StoreSpace,
};
use crate::io;
use crate::model::ModelParams;
use crate::nn::{self, train_independent, TrainConfig};
use crate::strategy::{
    CbrStrategy, DroStrategy, EftStrategy, NaperStrategy, ProtectionStrategy, TmrStrategy,
    UnprotectedStrategy,
};
use crate::{Error, Result};

/// Everything a simulation run needs besides the strategy instance:
/// datasets, trained models, and accuracy tables. Built once and shared
/// across strategy runs of the same scenario.
pub struct SimWorld {
    pub train: Dataset,
    pub val: Dataset,
    /// Base + redundants sharing one architecture.
    pub guard_models: Vec<ModelParams>,
    /// Pre-built guard when the config pointed at a guard file.
    pub guard: Option<GuardedEnsemble>,
    /// Heterogeneous fixed-ensemble members.
    pub eft_members: Vec<ModelParams>,
    pub pair_table: AccuracyTable,
    pub single_table: AccuracyTable,
    pub eft_table: AccuracyTable,
}

impl SimWorld {
    pub fn build(cfg: &SimConfig) -> Result<SimWorld> {
        cfg.validate()?;
        let data = match &cfg.source.dataset {
            Some(path) => load_csv(path, cfg.source.classes)?,
            None => {
                let dims = cfg.layer_sizes[0];
                let classes = *cfg.layer_sizes.last().unwrap();
                gen_synthetic(
                    cfg.seed,
                    cfg.train_samples + cfg.val_samples,
                    dims,
                    classes,
                    cfg.data_spread,
                )?
            }
        };
        let (train, val) = data.split(data.n_samples() - cfg.val_samples)?;

        let (guard_models, guard) = match (&cfg.source.base_model, &cfg.source.guard_file) {
            (Some(base_path), guard_path) => {
                let base = io::load_model(base_path)?;
                let redundants: Result<Vec<ModelParams>> = cfg
                    .source
                    .redundant_models
                    .iter()
                    .map(|p| io::load_model(p))
                    .collect();
                let redundants = redundants?;
                if redundants.is_empty() {
                    return Err(Error::Config(
                        "base_model given without redundant_models".into(),
                    ));
                }
                let guard = match guard_path {
                    Some(p) => Some(io::load_guard(p, base.clone(), redundants.clone())?),
                    None => None,
                };
                let mut models = vec![base];
                models.extend(redundants);
                (models, guard)
            }
            (None, Some(_)) => {
                return Err(Error::Config("guard_file given without base_model".into()))
            }
            (None, None) => {
                let spec = crate::model::NetworkSpec::new(cfg.layer_sizes.clone())?;
                let mut models = Vec::with_capacity(2);
                for i in 0..2u64 {
                    models.push(train_independent(
                        &spec,
                        &train,
                        &TrainConfig {
                            seed: cfg.seed.wrapping_add(1 + i),
                            epochs: cfg.train_epochs,
                            learning_rate: cfg.train_lr,
                            batch_size: cfg.train_batch,
                        },
                    )?);
                }
                (models, None)
            }
        };

        let eft_members: Result<Vec<ModelParams>> = cfg
            .eft_hidden
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let spec = crate::model::NetworkSpec::new(vec![
                    train.n_features(),
                    w,
                    train.n_classes(),
                ])?;
                train_independent(
                    &spec,
                    &train,
                    &TrainConfig {
                        seed: cfg.seed.wrapping_add(11 + i as u64),
                        epochs: cfg.train_epochs,
                        learning_rate: cfg.train_lr,
                        batch_size: cfg.train_batch,
                    },
                )
            })
            .collect();
        let eft_members = eft_members?;

        let pair_table = AccuracyTable::build(&guard_models, &val)?;
        let single_table = AccuracyTable::build(&guard_models[..1], &val)?;
        let eft_table = AccuracyTable::build(&eft_members, &val)?;
        Ok(SimWorld {
            train,
            val,
            guard_models,
            guard,
            eft_members,
            pair_table,
            single_table,
            eft_table,
        })
    }

    pub fn table_for(&self, kind: StrategyKind) -> &AccuracyTable {
        match kind {
            StrategyKind::Naper => &self.pair_table,
            StrategyKind::Eft => &self.eft_table,
            _ => &self.single_table,
        }
    }

    fn input_for(&self, frame: usize) -> &[f32] {
        self.val.sample(frame % self.val.n_samples())
    }

    pub fn build_strategy(&self, cfg: &SimConfig) -> Result<Box<dyn ProtectionStrategy>> {
        Ok(match cfg.strategy {
            StrategyKind::Naper => {
                let guard = match &self.guard {
                    Some(g) => g.clone(),
                    None => GuardedEnsemble::build(
                        self.guard_models[0].clone(),
                        self.guard_models[1..].to_vec(),
                    )?,
                };
                Box::new(NaperStrategy::new(guard))
            }
            StrategyKind::Tmr => Box::new(TmrStrategy::new(self.guard_models[0].clone())),
            StrategyKind::Dro => Box::new(DroStrategy::new(self.guard_models[0].clone())),
            StrategyKind::Cbr => Box::new(CbrStrategy::new(
                self.guard_models[0].clone(),
                &cfg.workdir,
                Duration::from_micros(cfg.disk_latency_us),
            )?),
            StrategyKind::Eft => Box::new(EftStrategy::new(self.eft_members.clone())?),
            StrategyKind::Unprotected => {
                Box::new(UnprotectedStrategy::new(self.guard_models[0].clone()))
            }
        })
    }
}

struct ScheduledFault {
    frame: usize,
    targets: Vec<StoreSelector>,
    seed: u64,
}

fn build_fault_schedule(
    cfg: &SimConfig,
    strategy: &dyn ProtectionStrategy,
) -> Result<Vec<ScheduledFault>> {
    let frames: Vec<usize> = match &cfg.fault_frames {
        Some(f) => f.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00F4_A3E5_11D3_77C1);
            let mut picked = std::collections::BTreeSet::new();
            while picked.len() < cfg.n_fault_events {
                picked.insert(rng.gen_range(0..cfg.n_frames));
            }
            picked.into_iter().collect()
        }
    };
    let replicas = strategy.replica_selectors();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51A3_C0DE_BA5E_0001);
    let mut schedule = Vec::with_capacity(frames.len());
    for (k, &frame) in frames.iter().enumerate() {
        let targets = match &cfg.fault_targets {
            FaultTargets::AutoSingleStore => vec![replicas[rng.gen_range(0..replicas.len())]],
            FaultTargets::Explicit(sels) => sels.clone(),
        };
        schedule.push(ScheduledFault {
            frame,
            targets,
            seed: cfg
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(k as u64),
        });
    }
    Ok(schedule)
}

fn selector_label(sel: &StoreSelector) -> String {
    match sel {
        StoreSelector::Base => "base".into(),
        StoreSelector::Redundant(m) => format!("r{m}"),
        StoreSelector::Delta(m) => format!("d{m}"),
        StoreSelector::All => "all".into(),
    }
}

fn frame_detect_cost(kind: StrategyKind, cfg: &SimConfig) -> u64 {
    match kind {
        StrategyKind::Naper | StrategyKind::Cbr => cfg.c_dt_us,
        StrategyKind::Tmr | StrategyKind::Dro => 2 * cfg.c_dt_us,
        StrategyKind::Eft | StrategyKind::Unprotected => 0,
    }
}

fn inline_repair_cost(kind: StrategyKind, repaired_layers: usize, cfg: &SimConfig) -> u64 {
    let per_layer = match kind {
        StrategyKind::Cbr => cfg.disk_latency_us,
        _ => cfg.c_rec_layer_us,
    };
    repaired_layers as u64 * per_layer
}

/// Build the world from the config, then simulate.
pub fn run_sim(cfg: &SimConfig) -> Result<SimTrace> {
    let world = SimWorld::build(cfg)?;
    run_sim_with(cfg, &world)
}

/// Simulate one strategy over a pre-built world. Fully deterministic:
/// the trace is a pure function of (config, world).
pub fn run_sim_with(cfg: &SimConfig, world: &SimWorld) -> Result<SimTrace> {
    cfg.validate()?;
    let mut strategy = world.build_strategy(cfg)?;
    let layer_count = strategy.layer_count();
    let deadline_us = cfg.derived_deadline_us(layer_count);
    let table = world.table_for(cfg.strategy);
    let classes = world.val.n_classes() as f64;
    let schedule = build_fault_schedule(cfg, strategy.as_ref())?;
    let model_ids: Vec<usize> = (0..strategy.model_count()).collect();
    let costs = CostProfile::virtual_table(
        &model_ids,
        cfg.c_dt_us,
        cfg.c_in_us,
        cfg.c_rec_layer_us,
        cfg.margin,
    );
    costs.validate()?;

    let mut clock: u64 = 0;
    let mut records = Vec::with_capacity(cfg.n_frames);
    let mut halted_at: BTreeMap<usize, u64> = BTreeMap::new();
    let mut max_recovery_us: u64 = 0;
    let mut fault_events = 0usize;
    let mut measured_acc: Option<f64> = None;

    for frame in 0..cfg.n_frames {
        let arrival = frame as u64 * cfg.frame_period_us;
        let start = clock.max(arrival);
        let mut events: Vec<SimEvent> = Vec::new();

        // Scheduled faults land before detection.
        for ev in schedule.iter().filter(|e| e.frame == frame) {
            let icfg = InjectionConfig {
                ber: cfg.fault_ber,
                mode: cfg.fault_mode,
                seed: ev.seed,
                targets: ev.targets.clone(),
                include_metadata: cfg.include_metadata,
            };
            let target: &mut dyn FaultTarget = strategy.as_mut();
            let space = StoreSpace::of_target(target, &icfg.targets, icfg.include_metadata);
            let plan = plan_injection(&icfg, &space)?;
            apply_injection(target, &plan, start)?;
            fault_events += 1;
            measured_acc = None;
            let store_label = ev
                .targets
                .iter()
                .map(selector_label)
                .collect::<Vec<_>>()
                .join("+");
            events.push(SimEvent::Fault {
                t_us: start,
                store: store_label,
                flips: plan.len(),
            });
        }

        // Total corruption (every model inactive) serves nothing this
        // frame; recovery below may still make progress.
        if strategy.serving_models().is_empty() {
            let next_arrival = (frame as u64 + 1) * cfg.frame_period_us;
            let slack = next_arrival.saturating_sub(clock.max(arrival));
            let budget = (slack / cfg.c_rec_layer_us) as usize;
            if budget > 0 {
                let progress = strategy.recover(budget)?;
                if progress.layers_recovered > 0 {
                    clock = clock.max(arrival) + progress.layers_recovered as u64 * cfg.c_rec_layer_us;
                    measured_acc = None;
                    events.push(SimEvent::Recovery {
                        t_us: clock,
                        layers: progress.layers_recovered,
                        remaining: progress.remaining,
                    });
                    for m in strategy.serving_models() {
                        if let Some(t0) = halted_at.remove(&m) {
                            let dt = clock - t0;
                            max_recovery_us = max_recovery_us.max(dt);
                            events.push(SimEvent::Rejoin {
                                t_us: clock,
                                model: m,
                                recovery_latency_us: dt,
                            });
                        }
                    }
                }
            }
            records.push(FrameRecord {
                frame,
                arrival_us: arrival,
                output_us: None,
                deadline_met: false,
                models_used: vec![],
                accuracy_proxy: 1.0 / classes,
                events,
            });
            continue;
        }

        let outcome = strategy.step(world.input_for(frame))?;
        if outcome.repaired_layers > 0 {
            measured_acc = None;
        }
        let detect_cost = frame_detect_cost(cfg.strategy, cfg);
        let infer_cost = cfg.c_in_us * outcome.models_used.len() as u64;
        let inline_cost = inline_repair_cost(cfg.strategy, outcome.repaired_layers, cfg);
        let busy = detect_cost + infer_cost + inline_cost;
        let output_us = outcome.scores.as_ref().map(|_| start + busy);
        clock = start + busy;

        let detect_done = start + detect_cost;
        for &m in &outcome.halted_models {
            halted_at.insert(m, detect_done);
        }
        if outcome.repaired_layers > 0 {
            // Inline repair: detection-to-restored latency is the repair
            // charge itself.
            max_recovery_us = max_recovery_us.max(inline_cost);
            events.push(SimEvent::Recovery {
                t_us: clock,
                layers: outcome.repaired_layers,
                remaining: 0,
            });
        }

        if cfg.strategy == StrategyKind::Naper && !outcome.halted_models.is_empty() {
            let committed = detect_cost + infer_cost;
            let tau = deadline_us.saturating_sub(committed);
            let sel = select_models(
                &outcome.models_used,
                &[],
                tau,
                &costs,
                table,
                cfg.a_threshold,
            );
            events.push(SimEvent::Selection {
                t_us: detect_done,
                chosen: sel.chosen.clone(),
                feasible: sel.feasible,
            });
        }

        let deadline_met = output_us.is_some_and(|t| t <= arrival + deadline_us);
        let accuracy_proxy = if !deadline_met {
            1.0 / classes
        } else if cfg.measure_accuracy {
            match measured_acc {
                Some(a) => a,
                None => {
                    let a = nn::evaluate(&strategy.eval_models(), &world.val)?;
                    measured_acc = Some(a);
                    a
                }
            }
        } else {
            table
                .get(&outcome.models_used)
                .ok_or_else(|| Error::Contract("accuracy table misses serving subset".into()))?
        };

        // Fill remaining slack with recovery chunks, whole layers only.
        let next_arrival = (frame as u64 + 1) * cfg.frame_period_us;
        let slack = next_arrival.saturating_sub(clock);
        let budget = (slack / cfg.c_rec_layer_us) as usize;
        if budget > 0 {
            let before: Vec<usize> = strategy.serving_models();
            let progress = strategy.recover(budget)?;
            if progress.layers_recovered > 0 {
                clock += progress.layers_recovered as u64 * cfg.c_rec_layer_us;
                measured_acc = None;
                events.push(SimEvent::Recovery {
                    t_us: clock,
                    layers: progress.layers_recovered,
                    remaining: progress.remaining,
                });
                for m in strategy.serving_models() {
                    if !before.contains(&m) {
                        if let Some(t0) = halted_at.remove(&m) {
                            let dt = clock - t0;
                            max_recovery_us = max_recovery_us.max(dt);
                            events.push(SimEvent::Rejoin {
                                t_us: clock,
                                model: m,
                                recovery_latency_us: dt,
                            });
                        }
                    }
                }
            }
        }

        records.push(FrameRecord {
            frame,
            arrival_us: arrival,
            output_us,
            deadline_met,
            models_used: outcome.models_used,
            accuracy_proxy,
            events,
        });
    }

    let met = records.iter().filter(|r| r.deadline_met).count();
    let mean_acc =
        records.iter().map(|r| r.accuracy_proxy).sum::<f64>() / records.len() as f64;
    Ok(SimTrace {
        summary: SimSummary {
            strategy: cfg.strategy.name().into(),
            frames: records.len(),
            fault_events,
            deadline_met_pct: 100.0 * met as f64 / records.len() as f64,
            mean_accuracy_proxy: mean_acc,
            max_recovery_us,
        },
        records,
    })
}
