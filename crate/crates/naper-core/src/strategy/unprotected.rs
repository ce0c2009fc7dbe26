//! Unprotected reference: one model, no detection, no recovery.

use std::time::Instant;

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreSelector};
use crate::model::ModelParams;
use crate::nn;
use crate::Result;

pub struct UnprotectedStrategy {
    model: ModelParams,
}

impl UnprotectedStrategy {
    pub fn new(model: ModelParams) -> Self {
        UnprotectedStrategy { model }
    }
}

impl ProtectionStrategy for UnprotectedStrategy {
    fn name(&self) -> &'static str {
        "unprotected"
    }

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome> {
        let t = Instant::now();
        let scores = nn::forward(&self.model, x)?;
        Ok(StepOutcome {
            scores: Some(scores),
            models_used: vec![0],
            halted_models: vec![],
            comparison_passes: 0,
            checksum_passes: 0,
            repaired_layers: 0,
            faulted_layers: vec![],
            unrecoverable: false,
            detect_time: std::time::Duration::ZERO,
            infer_time: t.elapsed(),
        })
    }

    fn recover(&mut self, _layer_budget: usize) -> Result<RecoveryProgress> {
        Ok(RecoveryProgress {
            layers_recovered: 0,
            remaining: 0,
        })
    }

    fn memory_report(&self) -> MemoryReport {
        MemoryReport {
            strategy: self.name().into(),
            base_bytes: self.model.byte_size(),
            redundancy_bytes: 0,
            metadata_bytes: 0,
        }
    }

    fn serving_models(&self) -> Vec<usize> {
        vec![0]
    }

    fn model_count(&self) -> usize {
        1
    }

    fn layer_count(&self) -> usize {
        self.model.layer_count()
    }

    fn eval_models(&self) -> Vec<&ModelParams> {
        vec![&self.model]
    }

    fn replica_selectors(&self) -> Vec<StoreSelector> {
        vec![StoreSelector::Base]
    }
}

impl FaultTarget for UnprotectedStrategy {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        self.model.fault_stores()
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        self.model.flip_at(loc)
    }
}
