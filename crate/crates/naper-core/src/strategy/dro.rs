//! Detection-and-recovery-only: three copies like TMR, pairwise
//! comparison for detection, but recovery copies the whole faulted layer
//! from a copy that agrees with the third instead of voting per element.

use std::time::Instant;

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreKind, StorePart, StoreSelector};
use crate::model::ModelParams;
use crate::nn;
use crate::tensor::bit_equal;
use crate::{Error, Result};

pub struct DroStrategy {
    copies: Vec<ModelParams>,
}

impl DroStrategy {
    pub fn new(model: ModelParams) -> Self {
        DroStrategy {
            copies: vec![model.clone(), model.clone(), model],
        }
    }

    pub fn copies(&self) -> &[ModelParams] {
        &self.copies
    }

    fn copy_layer(&mut self, from: usize, to: usize, layer: usize) {
        let src = self.copies[from].layers()[layer].clone();
        let dst = &mut self.copies[to].layers_mut()[layer];
        dst.weights.copy_from(&src.weights).unwrap();
        dst.bias.copy_from(&src.bias).unwrap();
    }
}

fn layer_equal(a: &ModelParams, b: &ModelParams, layer: usize) -> bool {
    let (la, lb) = (&a.layers()[layer], &b.layers()[layer]);
    bit_equal(&la.weights, &lb.weights).map(|c| c.equal).unwrap_or(false)
        && bit_equal(&la.bias, &lb.bias).map(|c| c.equal).unwrap_or(false)
}

impl ProtectionStrategy for DroStrategy {
    fn name(&self) -> &'static str {
        "dro"
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
            match (eq01, eq02) {
                (true, true) => continue,
                (false, true) => {
                    faulted_layers.push(layer);
                    self.copy_layer(0, 1, layer);
                    repaired_layers += 1;
                }
                (true, false) => {
                    faulted_layers.push(layer);
                    self.copy_layer(0, 2, layer);
                    repaired_layers += 1;
                }
                (false, false) => {
                    faulted_layers.push(layer);
                    // The extra compare belongs to recovery, not the
                    // two-pass detection budget; it still counts.
                    comparison_passes += 1;
                    if layer_equal(&self.copies[1], &self.copies[2], layer) {
                        self.copy_layer(1, 0, layer);
                        repaired_layers += 1;
                    } else {
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
                        });
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

impl FaultTarget for DroStrategy {
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
            other => return Err(Error::OutOfRange(format!("dro has no store {other:?}"))),
        };
        let layer = &mut self.copies[copy].layers_mut()[loc.store.layer];
        let t = match loc.store.part {
            StorePart::Weights => &mut layer.weights,
            StorePart::Bias => &mut layer.bias,
            StorePart::Meta => return Err(Error::OutOfRange("dro has no checksum words".into())),
        };
        t.flip_bit(loc.elem_index, loc.bit_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{models_bit_identical, NetworkSpec};

    fn strat() -> DroStrategy {
        let spec = NetworkSpec::new(vec![4, 6, 3]).unwrap();
        DroStrategy::new(ModelParams::init(&spec, 9))
    }

    #[test]
    fn fault_free_counters_are_two_per_layer() {
        let mut s = strat();
        let x = [0.5, 0.5, -0.5, 0.1];
        let expect = nn::forward(&s.copies[0], &x).unwrap();
        let out = s.step(&x).unwrap();
        assert_eq!(out.scores.unwrap(), expect);
        assert_eq!(out.comparison_passes, 2 * s.layer_count() as u64);
        assert_eq!(out.checksum_passes, 0);
    }

    #[test]
    fn faulted_layer_is_copied_back_bit_exactly() {
        let mut s = strat();
        let snapshot = s.copies.clone();
        s.copies[2].layers_mut()[0].bias.flip_bit(1, 30).unwrap();
        let out = s.step(&[0.0; 4]).unwrap();
        assert_eq!(out.repaired_layers, 1);
        for (c, orig) in s.copies.iter().zip(&snapshot) {
            assert!(models_bit_identical(c, orig));
        }
    }

    #[test]
    fn primary_copy_recovers_from_agreeing_pair() {
        let mut s = strat();
        let snapshot = s.copies.clone();
        s.copies[0].layers_mut()[1].weights.flip_bit(0, 29).unwrap();
        let out = s.step(&[0.0; 4]).unwrap();
        assert!(!out.unrecoverable);
        assert!(models_bit_identical(&s.copies[0], &snapshot[0]));
    }

    #[test]
    fn mutually_distinct_copies_are_unrecoverable() {
        let mut s = strat();
        s.copies[0].layers_mut()[0].weights.flip_bit(0, 3).unwrap();
        s.copies[1].layers_mut()[0].weights.flip_bit(0, 4).unwrap();
        s.copies[2].layers_mut()[0].weights.flip_bit(0, 5).unwrap();
        let out = s.step(&[0.0; 4]).unwrap();
        assert!(out.unrecoverable);
    }

    #[test]
    fn memory_matches_tmr() {
        assert_eq!(strat().memory_report().overhead_percent(), 200.0);
    }
}
