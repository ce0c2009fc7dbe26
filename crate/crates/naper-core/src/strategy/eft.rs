//! Fixed heterogeneous ensemble: plain average voting over members of
//! different widths, no detection, no recovery. Faults accumulate
//! silently in the member parameters.

use std::time::Instant;

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreKind, StorePart, StoreSelector};
use crate::model::ModelParams;
use crate::nn;
use crate::par;
use crate::{Error, Result};

pub struct EftStrategy {
    members: Vec<ModelParams>,
}

impl EftStrategy {
    /// Members must agree on input and class dimensions; hidden widths
    /// are free (the desk-scale analogue of mixing network depths).
    pub fn new(members: Vec<ModelParams>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Contract("eft needs at least two member models".into()));
        }
        let (d, k) = (members[0].input_dim(), members[0].class_count());
        for (i, m) in members.iter().enumerate() {
            if m.input_dim() != d || m.class_count() != k {
                return Err(Error::Contract(format!(
                    "member {i} dims ({}, {}) differ from ({d}, {k})",
                    m.input_dim(),
                    m.class_count()
                )));
            }
        }
        Ok(EftStrategy { members })
    }

    pub fn members(&self) -> &[ModelParams] {
        &self.members
    }
}

impl ProtectionStrategy for EftStrategy {
    fn name(&self) -> &'static str {
        "eft"
    }

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome> {
        let t_infer = Instant::now();
        let outs: Result<Vec<Vec<f32>>> = par::map_indexed(self.members.len(), |i| {
            nn::forward(&self.members[i], x)
        })
        .into_iter()
        .collect();
        let scores = nn::mean_scores(&outs?);
        Ok(StepOutcome {
            scores: Some(scores),
            models_used: (0..self.members.len()).collect(),
            halted_models: vec![],
            comparison_passes: 0,
            checksum_passes: 0,
            repaired_layers: 0,
            faulted_layers: vec![],
            unrecoverable: false,
            detect_time: std::time::Duration::ZERO,
            infer_time: t_infer.elapsed(),
        })
    }

    fn recover(&mut self, _layer_budget: usize) -> Result<RecoveryProgress> {
        // No recovery by design; state is untouched.
        Ok(RecoveryProgress {
            layers_recovered: 0,
            remaining: 0,
        })
    }

    fn memory_report(&self) -> MemoryReport {
        MemoryReport {
            strategy: self.name().into(),
            base_bytes: self.members[0].byte_size(),
            redundancy_bytes: self.members[1..].iter().map(|m| m.byte_size()).sum(),
            metadata_bytes: 0,
        }
    }

    fn serving_models(&self) -> Vec<usize> {
        (0..self.members.len()).collect()
    }

    fn model_count(&self) -> usize {
        self.members.len()
    }

    fn layer_count(&self) -> usize {
        self.members[0].layer_count()
    }

    fn eval_models(&self) -> Vec<&ModelParams> {
        self.members.iter().collect()
    }

    fn replica_selectors(&self) -> Vec<StoreSelector> {
        (0..self.members.len())
            .map(|i| {
                if i == 0 {
                    StoreSelector::Base
                } else {
                    StoreSelector::Redundant(i)
                }
            })
            .collect()
    }
}

impl FaultTarget for EftStrategy {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        let mut out = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            let kind = if i == 0 {
                StoreKind::Base
            } else {
                StoreKind::Redundant(i)
            };
            for (n, l) in m.layers().iter().enumerate() {
                out.push(StoreEntry::tensor(kind, n, StorePart::Weights, l.weights.len()));
                out.push(StoreEntry::tensor(kind, n, StorePart::Bias, l.bias.len()));
            }
        }
        out
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        let member = match loc.store.kind {
            StoreKind::Base => 0,
            StoreKind::Redundant(m) if m < self.members.len() => m,
            other => return Err(Error::OutOfRange(format!("eft has no store {other:?}"))),
        };
        let layer = &mut self.members[member].layers_mut()[loc.store.layer];
        let t = match loc.store.part {
            StorePart::Weights => &mut layer.weights,
            StorePart::Bias => &mut layer.bias,
            StorePart::Meta => return Err(Error::OutOfRange("eft has no checksum words".into())),
        };
        t.flip_bit(loc.elem_index, loc.bit_index)
    }
}
