//! Protection schemes behind one interface, so the simulator and the
//! benches treat the relation-parameter guard and the baselines
//! uniformly. Counters follow one convention everywhere: a comparison
//! pass is a whole-layer compare of two stores, a checksum pass is a
//! whole-layer checksum recomputation.

mod cbr;
mod dro;
mod eft;
mod naper;
mod tmr;
mod unprotected;

pub use cbr::CbrStrategy;
pub use dro::DroStrategy;
pub use eft::EftStrategy;
pub use naper::NaperStrategy;
pub use tmr::TmrStrategy;
pub use unprotected::UnprotectedStrategy;

use std::time::Duration;

pub use crate::guard::RecoveryProgress;
use crate::inject::{FaultTarget, StoreSelector};
use crate::model::ModelParams;
use crate::Result;

/// What one protected inference step did.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// None when no model could produce output.
    pub scores: Option<Vec<f32>>,
    /// Logical models whose outputs were combined.
    pub models_used: Vec<usize>,
    /// Models newly halted by this step (deferred-recovery schemes).
    pub halted_models: Vec<usize>,
    pub comparison_passes: u64,
    pub checksum_passes: u64,
    /// Layers repaired inline during the step (votes, copies, reloads).
    pub repaired_layers: usize,
    /// Distinct layers flagged faulty during the step.
    pub faulted_layers: Vec<usize>,
    pub unrecoverable: bool,
    pub detect_time: Duration,
    pub infer_time: Duration,
}

impl StepOutcome {
    pub fn fault_detected(&self) -> bool {
        !self.faulted_layers.is_empty()
    }
}

/// Memory accounting: redundancy is replicated parameter storage,
/// metadata is checksums and similar bookkeeping.
#[derive(Debug, Clone)]
pub struct MemoryReport {
    pub strategy: String,
    pub base_bytes: u64,
    pub redundancy_bytes: u64,
    pub metadata_bytes: u64,
}

impl MemoryReport {
    pub fn overhead_percent(&self) -> f64 {
        100.0 * (self.redundancy_bytes + self.metadata_bytes) as f64 / self.base_bytes as f64
    }

    pub fn csv_header() -> &'static str {
        "strategy,base_bytes,redundancy_bytes,metadata_bytes,overhead_percent"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.strategy,
            self.base_bytes,
            self.redundancy_bytes,
            self.metadata_bytes,
            self.overhead_percent()
        )
    }
}

/// Uniform interface over NAPER and the baselines. Preparation (copy
/// replication, checksum computation, disk snapshots) happens in each
/// strategy's constructor; `step` runs detection plus inference on one
/// input; `recover` advances deferred recovery by up to a layer budget
/// and reports progress. Fault injection reaches parameter stores
/// through the `FaultTarget` supertrait.
pub trait ProtectionStrategy: FaultTarget {
    fn name(&self) -> &'static str;

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome>;

    fn recover(&mut self, layer_budget: usize) -> Result<RecoveryProgress>;

    fn memory_report(&self) -> MemoryReport;

    /// Logical models currently able to serve.
    fn serving_models(&self) -> Vec<usize>;

    fn model_count(&self) -> usize;

    fn layer_count(&self) -> usize;

    /// Models to evaluate for measured-accuracy runs, in id order.
    fn eval_models(&self) -> Vec<&ModelParams>;

    /// One single-store selector per replicated parameter store, used by
    /// the simulator's per-event target rotation.
    fn replica_selectors(&self) -> Vec<StoreSelector>;
}
