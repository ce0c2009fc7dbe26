//! Cost profiles: per-model detection and inference durations plus the
//! per-layer recovery cost that drive the simulator's virtual clock.
//! Virtual mode echoes a configured table; wall-clock mode takes the
//! observed worst case (max over runs) times a safety margin.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::strategy::ProtectionStrategy;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CostProfile {
    c_dt_us: BTreeMap<usize, u64>,
    c_in_us: BTreeMap<usize, u64>,
    pub c_rec_layer_us: u64,
    pub margin: f64,
}

impl CostProfile {
    /// Pass-through table: every model gets the same configured costs,
    /// echoed exactly (the margin is stored for reporting but virtual
    /// costs are authoritative as given).
    pub fn virtual_table(
        model_ids: &[usize],
        c_dt_us: u64,
        c_in_us: u64,
        c_rec_layer_us: u64,
        margin: f64,
    ) -> Self {
        CostProfile {
            c_dt_us: model_ids.iter().map(|&id| (id, c_dt_us)).collect(),
            c_in_us: model_ids.iter().map(|&id| (id, c_in_us)).collect(),
            c_rec_layer_us,
            margin,
        }
    }

    pub fn detect_us(&self, id: usize) -> u64 {
        self.c_dt_us.get(&id).copied().unwrap_or(0)
    }

    pub fn infer_us(&self, id: usize) -> u64 {
        self.c_in_us.get(&id).copied().unwrap_or(0)
    }

    /// C_dt + C_in for one model, the scheduler's per-addition cost.
    pub fn model_cost_us(&self, id: usize) -> u64 {
        self.detect_us(id) + self.infer_us(id)
    }

    pub fn set_model_cost(&mut self, id: usize, c_dt_us: u64, c_in_us: u64) {
        self.c_dt_us.insert(id, c_dt_us);
        self.c_in_us.insert(id, c_in_us);
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_rec_layer_us == 0 {
            return Err(Error::Config("c_rec_layer must be positive".into()));
        }
        if self.margin < 1.0 {
            return Err(Error::Config(format!("margin {} below 1.0", self.margin)));
        }
        if self.c_dt_us.values().chain(self.c_in_us.values()).any(|&v| v == 0) {
            return Err(Error::Config("all profiled costs must be positive".into()));
        }
        Ok(())
    }
}

pub enum CostSource<'a> {
    /// Costs come from a config table; no timing.
    Virtual {
        c_dt_us: u64,
        c_in_us: u64,
        c_rec_layer_us: u64,
        margin: f64,
    },
    /// Time `runs` fault-free steps over the given inputs and take the
    /// observed worst case × margin.
    WallClock {
        inputs: &'a [Vec<f32>],
        runs: usize,
        margin: f64,
    },
}

/// Build a cost profile for a strategy. Wall-clock mode needs runs ≥ 3
/// and a measurable clock; zero-duration samples are rejected.
pub fn profile_costs(
    strategy: &mut dyn ProtectionStrategy,
    source: CostSource<'_>,
) -> Result<CostProfile> {
    match source {
        CostSource::Virtual {
            c_dt_us,
            c_in_us,
            c_rec_layer_us,
            margin,
        } => {
            let ids: Vec<usize> = (0..strategy.model_count()).collect();
            let p = CostProfile::virtual_table(&ids, c_dt_us, c_in_us, c_rec_layer_us, margin);
            p.validate()?;
            Ok(p)
        }
        CostSource::WallClock { inputs, runs, margin } => {
            if runs < 3 {
                return Err(Error::Config("wall-clock profiling needs runs >= 3".into()));
            }
            if inputs.is_empty() {
                return Err(Error::Config("wall-clock profiling needs inputs".into()));
            }
            if margin < 1.0 {
                return Err(Error::Config(format!("margin {margin} below 1.0")));
            }
            let mut max_detect = 0u128;
            let mut max_infer = 0u128;
            for run in 0..runs {
                let x = &inputs[run % inputs.len()];
                let out = strategy.step(x)?;
                max_detect = max_detect.max(out.detect_time.as_micros());
                max_infer = max_infer.max(out.infer_time.as_micros());
            }
            if max_infer == 0 {
                return Err(Error::Profiling(
                    "zero-duration inference samples: clock resolution too coarse".into(),
                ));
            }
            let serving = strategy.serving_models().len().max(1) as f64;
            let apply = |v: u128| ((v as f64 * margin / serving).round() as u64).max(1);
            let c_rec = probe_recovery_cost(strategy, &inputs[0], margin)?;
            let ids: Vec<usize> = (0..strategy.model_count()).collect();
            let p = CostProfile::virtual_table(
                &ids,
                apply(max_detect),
                apply(max_infer),
                c_rec,
                margin,
            );
            p.validate()?;
            Ok(p)
        }
    }
}

/// Time one layer's recovery by planting a single flip in the first
/// redundant store and driving the strategy's own repair path. Every
/// scheme restores bit-exact state, so the probe is side-effect free.
fn probe_recovery_cost(
    strategy: &mut dyn ProtectionStrategy,
    x: &[f32],
    margin: f64,
) -> Result<u64> {
    use crate::inject::BitLocation;
    let stores = strategy.fault_stores();
    let target = stores
        .iter()
        .find(|e| e.id.kind != crate::inject::StoreKind::Base)
        .or(stores.first())
        .copied();
    let Some(entry) = target else {
        return Ok(1);
    };
    let loc = BitLocation {
        store: entry.id,
        elem_index: 0,
        bit_index: 30,
    };
    // Fault-free baseline for inline-repair schemes.
    let clean = strategy.step(x)?;
    strategy.flip_at(&loc)?;
    let t = Instant::now();
    let faulted = strategy.step(x)?;
    let step_us = t.elapsed().as_micros();
    if faulted.repaired_layers > 0 {
        let delta = step_us.saturating_sub(clean.detect_time.as_micros() + clean.infer_time.as_micros());
        return Ok(((delta as f64 * margin / faulted.repaired_layers as f64).round() as u64).max(1));
    }
    // Deferred-recovery schemes: time the recover call itself.
    let t = Instant::now();
    let progress = strategy.recover(usize::MAX)?;
    let rec_us = t.elapsed().as_micros();
    if progress.layers_recovered == 0 {
        // No recovery machinery at all; restore the flip and move on.
        strategy.flip_at(&loc)?;
        return Ok(1);
    }
    Ok(((rec_us as f64 * margin / progress.layers_recovered as f64).round() as u64).max(1))
}
