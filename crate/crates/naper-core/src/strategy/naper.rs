//! Adapter exposing the guarded ensemble through the strategy interface.
//! Steps delegate to guarded inference; recovery drains the guard's
//! faulted layers in chunks, fastest-to-return model first.

use std::collections::BTreeSet;
use std::time::Instant;

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::guard::{GuardedEnsemble, OutputMode, VerdictKind};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreSelector};
use crate::model::ModelParams;
use crate::{Error, Result};

pub struct NaperStrategy {
    guard: GuardedEnsemble,
    /// Models whose recovery escalated (a second store corrupted in the
    /// same layer). They stay inactive and are skipped by recover().
    stuck: BTreeSet<usize>,
}

impl NaperStrategy {
    pub fn new(guard: GuardedEnsemble) -> Self {
        NaperStrategy {
            guard,
            stuck: BTreeSet::new(),
        }
    }

    pub fn guard(&self) -> &GuardedEnsemble {
        &self.guard
    }

    pub fn guard_mut(&mut self) -> &mut GuardedEnsemble {
        &mut self.guard
    }

    /// Models whose recovery escalated and will not rejoin.
    pub fn stuck_models(&self) -> &BTreeSet<usize> {
        &self.stuck
    }
}

impl ProtectionStrategy for NaperStrategy {
    fn name(&self) -> &'static str {
        "naper"
    }

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome> {
        let c0 = (
            self.guard.counters().comparisons(),
            self.guard.counters().checksums(),
        );
        let t = Instant::now();
        let (scores, report) = self.guard.guarded_inference(x)?;
        let elapsed = t.elapsed();
        let c1 = (
            self.guard.counters().comparisons(),
            self.guard.counters().checksums(),
        );
        let models_used = match &report.output_mode {
            OutputMode::FullEnsemble => (0..self.guard.model_count()).collect(),
            OutputMode::PartialEnsemble(set) => set.iter().copied().collect(),
            OutputMode::SingleModel(id) => vec![*id],
            OutputMode::NoOutput => vec![],
        };
        let unrecoverable = report
            .verdicts
            .iter()
            .any(|v| v.result == VerdictKind::Unrecoverable);
        // The guard interleaves detection with inference; attribute the
        // whole step to detect_time + infer_time by survivor count.
        let faulted_layers = report.faulted_layers();
        Ok(StepOutcome {
            scores,
            models_used,
            halted_models: report.models_halted.iter().copied().collect(),
            comparison_passes: c1.0 - c0.0,
            checksum_passes: c1.1 - c0.1,
            repaired_layers: 0,
            faulted_layers,
            unrecoverable,
            detect_time: elapsed / 2,
            infer_time: elapsed / 2,
        })
    }

    fn recover(&mut self, layer_budget: usize) -> Result<RecoveryProgress> {
        let mut budget = layer_budget;
        let mut recovered = 0;
        loop {
            // Inactive model with the fewest remaining faulted layers
            // first: fastest return to ensemble accuracy.
            let next = (0..self.guard.model_count())
                .filter(|id| {
                    !self.stuck.contains(id)
                        && !self.guard.model_active(*id)
                        && self.guard.remaining_faulted(*id) > 0
                })
                .min_by_key(|&id| (self.guard.remaining_faulted(id), id));
            let Some(id) = next else { break };
            if budget == 0 {
                break;
            }
            // One layer unit at a time so escalation never loses the
            // progress already charged to the budget.
            match self.guard.recover_model(id, 1) {
                Ok(progress) => {
                    recovered += progress.layers_recovered;
                    budget -= progress.layers_recovered;
                    if progress.layers_recovered == 0 {
                        break;
                    }
                }
                Err(Error::Unrecoverable { .. }) => {
                    // Escalation: the model stays inactive for good.
                    self.stuck.insert(id);
                }
                Err(e) => return Err(e),
            }
        }
        let remaining = (0..self.guard.model_count())
            .map(|id| self.guard.remaining_faulted(id))
            .sum();
        Ok(RecoveryProgress {
            layers_recovered: recovered,
            remaining,
        })
    }

    fn memory_report(&self) -> MemoryReport {
        let base = self.guard.base().byte_size();
        let redundancy: u64 = self
            .guard
            .redundants()
            .iter()
            .map(|m| m.byte_size())
            .sum::<u64>()
            + (1..=self.guard.redundant_count())
                .map(|m| {
                    self.guard.deltas(m)
                        .iter()
                        .map(|l| l.byte_size())
                        .sum::<u64>()
                })
                .sum::<u64>();
        // One (int_sum u64, value_sum f64) pair per store per layer.
        let store_count = 1 + 2 * self.guard.redundant_count() as u64;
        let metadata = 16 * store_count * self.guard.layer_count() as u64;
        MemoryReport {
            strategy: self.name().into(),
            base_bytes: base,
            redundancy_bytes: redundancy,
            metadata_bytes: metadata,
        }
    }

    fn serving_models(&self) -> Vec<usize> {
        self.guard.active_models()
    }

    fn model_count(&self) -> usize {
        self.guard.model_count()
    }

    fn layer_count(&self) -> usize {
        self.guard.layer_count()
    }

    fn eval_models(&self) -> Vec<&ModelParams> {
        self.guard
            .active_models()
            .into_iter()
            .map(|id| self.guard.model(id))
            .collect()
    }

    fn replica_selectors(&self) -> Vec<StoreSelector> {
        let mut out = vec![StoreSelector::Base];
        out.extend((1..=self.guard.redundant_count()).map(StoreSelector::Redundant));
        out
    }
}

impl FaultTarget for NaperStrategy {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        self.guard.fault_stores()
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        self.guard.flip_at(loc)
    }
}
