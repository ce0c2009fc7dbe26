//! Triple modular redundancy: three bit-identical copies, two comparison
//! passes per layer, and per-element majority voting that rewrites the
//! minority copy inline during the step.

use std::time::Instant;

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreKind, StorePart, StoreSelector};
use crate::model::ModelParams;
use crate::nn;
use crate::tensor::{bit_equal, Tensor};
use crate::{Error, Result};

pub struct TmrStrategy {
    copies: Vec<ModelParams>,
}

impl TmrStrategy {
    pub fn new(model: ModelParams) -> Self {
        let copies = vec![model.clone(), model.clone(), model];
        TmrStrategy { copies }
    }

    pub fn copies(&self) -> &[ModelParams] {
        &self.copies
    }

    /// Majority vote over the three copies of one tensor. Returns the
    /// number of rewritten elements; three distinct values at one element
    /// leave no majority.
    fn vote_tensor(layer: usize, part: &str, tensors: [&mut Tensor; 3]) -> Result<usize> {
        let [t0, t1, t2] = tensors;
        let n = t0.len();
        let mut fixed = 0;
        for i in 0..n {
            let b0 = t0.as_slice()[i].to_bits();
            let b1 = t1.as_slice()[i].to_bits();
            let b2 = t2.as_slice()[i].to_bits();
            if b0 == b1 && b1 == b2 {
                continue;
            }
            let truth = if b0 == b1 || b0 == b2 {
                b0
            } else if b1 == b2 {
                b1
            } else {
                return Err(Error::Unrecoverable {
                    layer,
                    msg: format!("no majority at {part} element {i}: three distinct values"),
                });
            };
            for t in [&mut *t0, &mut *t1, &mut *t2] {
                if t.as_slice()[i].to_bits() != truth {
                    t.as_mut_slice()[i] = f32::from_bits(truth);
                    fixed += 1;
                }
            }
        }
        Ok(fixed)
    }

    fn vote_layer(&mut self, layer: usize) -> Result<usize> {
        let (head, rest) = self.copies.split_at_mut(1);
        let (mid, tail) = rest.split_at_mut(1);
        let l0 = &mut head[0].layers_mut()[layer];
        let l1 = &mut mid[0].layers_mut()[layer];
        let l2 = &mut tail[0].layers_mut()[layer];
        let mut fixed = Self::vote_tensor(layer, "weights", [&mut l0.weights, &mut l1.weights, &mut l2.weights])?;
        fixed += Self::vote_tensor(layer, "bias", [&mut l0.bias, &mut l1.bias, &mut l2.bias])?;
        Ok(fixed)
    }
}

fn layer_equal(a: &ModelParams, b: &ModelParams, layer: usize) -> bool {
    let (la, lb) = (&a.layers()[layer], &b.layers()[layer]);
    bit_equal(&la.weights, &lb.weights).map(|c| c.equal).unwrap_or(false)
        && bit_equal(&la.bias, &lb.bias).map(|c| c.equal).unwrap_or(false)
}

impl ProtectionStrategy for TmrStrategy {
    fn name(&self) -> &'static str {
        "tmr"
    }

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome> {
        let layers = self.copies[0].layer_count();
        let mut comparison_passes = 0;
        let mut repaired_layers = 0;
        let mut faulted_layers = Vec::new();
        let t_detect = Instant::now();
        for layer in 0..layers {
            comparison_passes += 2;
            let eq01 = layer_equal(&self.copies[0], &self.copies[1], layer);
            let eq02 = layer_equal(&self.copies[0], &self.copies[2], layer);
            if !(eq01 && eq02) {
                faulted_layers.push(layer);
                match self.vote_layer(layer) {
                    Ok(_) => repaired_layers += 1,
                    Err(_) => {
                        return Ok(StepOutcome {
                            scores: None,
                            models_used: vec![],
                            halted_models: vec![0],
                            comparison_passes,
                            checksum_passes: 0,
                            repaired_layers,
                            faulted_layers,
                            unrecoverable: true,
                            detect_time: t_detect.elapsed(),
                            infer_time: std::time::Duration::ZERO,
                        })
                    }
                }
            }
        }
        let detect_time = t_detect.elapsed();
        let t_infer = Instant::now();
        let scores = nn::forward(&self.copies[0], x)?;
        Ok(StepOutcome {
            scores: Some(scores),
            models_used: vec![0],
            halted_models: vec![],
            comparison_passes,
            checksum_passes: 0,
            repaired_layers,
            faulted_layers,
            unrecoverable: false,
            detect_time,
            infer_time: t_infer.elapsed(),
        })
    }

    fn recover(&mut self, _layer_budget: usize) -> Result<RecoveryProgress> {
        // Repair happens inside the step.
        Ok(RecoveryProgress {
            layers_recovered: 0,
            remaining: 0,
        })
    }

    fn memory_report(&self) -> MemoryReport {
        let base = self.copies[0].byte_size();
        MemoryReport {
            strategy: self.name().into(),
            base_bytes: base,
            redundancy_bytes: 2 * base,
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
        self.copies[0].layer_count()
    }

    fn eval_models(&self) -> Vec<&ModelParams> {
        vec![&self.copies[0]]
    }

    fn replica_selectors(&self) -> Vec<StoreSelector> {
        vec![
            StoreSelector::Base,
            StoreSelector::Redundant(1),
            StoreSelector::Redundant(2),
        ]
    }
}

impl FaultTarget for TmrStrategy {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        let mut out = Vec::new();
        for (copy, kind) in [
            (0usize, StoreKind::Base),
            (1, StoreKind::Redundant(1)),
            (2, StoreKind::Redundant(2)),
        ] {
            for (n, l) in self.copies[copy].layers().iter().enumerate() {
                out.push(StoreEntry::tensor(kind, n, StorePart::Weights, l.weights.len()));
                out.push(StoreEntry::tensor(kind, n, StorePart::Bias, l.bias.len()));
            }
        }
        out
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        let copy = match loc.store.kind {
            StoreKind::Base => 0,
            StoreKind::Redundant(m) if m <= 2 => m,
            other => {
                return Err(Error::OutOfRange(format!("tmr has no store {other:?}")));
            }
        };
        let layer = &mut self.copies[copy].layers_mut()[loc.store.layer];
        let t = match loc.store.part {
            StorePart::Weights => &mut layer.weights,
            StorePart::Bias => &mut layer.bias,
            StorePart::Meta => return Err(Error::OutOfRange("tmr has no checksum words".into())),
        };
        t.flip_bit(loc.elem_index, loc.bit_index)
    }
}
