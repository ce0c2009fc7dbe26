//! Checksum-based recovery: one live model, per-layer checksums for
//! detection, and a healthy copy persisted to disk at preparation that
//! faulted layers are reloaded from.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreSelector};
use crate::io;
use crate::model::{LayerParams, ModelParams};
use crate::nn;
use crate::tensor::Checksum;
use crate::{Error, Result};

pub struct CbrStrategy {
    model: ModelParams,
    sums: Vec<Checksum>,
    disk_path: PathBuf,
    disk_latency_per_layer: Duration,
}

fn layer_checksum(layer: &LayerParams) -> Checksum {
    Checksum::of_parts(&[&layer.weights, &layer.bias])
}

impl CbrStrategy {
    /// Persists the healthy parameters under `store_dir` and keeps one
    /// checksum per layer. `disk_latency_per_layer` is the recovery cost
    /// the simulator charges per reloaded layer.
    pub fn new(
        model: ModelParams,
        store_dir: &Path,
        disk_latency_per_layer: Duration,
    ) -> Result<Self> {
        std::fs::create_dir_all(store_dir)?;
        let disk_path = store_dir.join("cbr-store.napm");
        io::save_model(&model, &disk_path)?;
        let sums = model.layers().iter().map(layer_checksum).collect();
        Ok(CbrStrategy {
            model,
            sums,
            disk_path,
            disk_latency_per_layer,
        })
    }

    pub fn disk_latency_per_layer(&self) -> Duration {
        self.disk_latency_per_layer
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }
}

impl ProtectionStrategy for CbrStrategy {
    fn name(&self) -> &'static str {
        "cbr"
    }

    fn step(&mut self, x: &[f32]) -> Result<StepOutcome> {
        let layers = self.model.layer_count();
        let mut checksum_passes = 0;
        let mut faulted_layers = Vec::new();
        let t_detect = Instant::now();
        for layer in 0..layers {
            checksum_passes += 1;
            if layer_checksum(&self.model.layers()[layer]).int_sum != self.sums[layer].int_sum {
                faulted_layers.push(layer);
            }
        }
        let mut repaired_layers = 0;
        if !faulted_layers.is_empty() {
            // Disk copy is the recovery source; unreadable is fatal.
            let healthy = io::load_model(&self.disk_path)?;
            for &layer in &faulted_layers {
                let src = &healthy.layers()[layer];
                let dst = &mut self.model.layers_mut()[layer];
                dst.weights.copy_from(&src.weights)?;
                dst.bias.copy_from(&src.bias)?;
                if layer_checksum(&self.model.layers()[layer]).int_sum != self.sums[layer].int_sum
                {
                    return Err(Error::Unrecoverable {
                        layer,
                        msg: "reloaded layer does not match its stored checksum".into(),
                    });
                }
                repaired_layers += 1;
            }
        }
        let detect_time = t_detect.elapsed();
        let t_infer = Instant::now();
        let scores = nn::forward(&self.model, x)?;
        Ok(StepOutcome {
            scores: Some(scores),
            models_used: vec![0],
            halted_models: vec![],
            comparison_passes: 0,
            checksum_passes,
            repaired_layers,
            faulted_layers,
            unrecoverable: false,
            detect_time,
            infer_time: t_infer.elapsed(),
        })
    }

    fn recover(&mut self, _layer_budget: usize) -> Result<RecoveryProgress> {
        // Reloads happen inside the step.
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
            metadata_bytes: 16 * self.model.layer_count() as u64,
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

impl FaultTarget for CbrStrategy {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        self.model.fault_stores()
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        self.model.flip_at(loc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{models_bit_identical, NetworkSpec};

    fn strat(dir: &Path) -> CbrStrategy {
        let spec = NetworkSpec::new(vec![4, 6, 3]).unwrap();
        CbrStrategy::new(ModelParams::init(&spec, 3), dir, Duration::from_millis(30)).unwrap()
    }

    #[test]
    fn fault_free_step_uses_one_checksum_pass_per_layer() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = strat(dir.path());
        let x = [0.2, 0.1, -0.4, 0.9];
        let expect = nn::forward(&s.model, &x).unwrap();
        let out = s.step(&x).unwrap();
        assert_eq!(out.scores.unwrap(), expect);
        assert_eq!(out.checksum_passes, s.layer_count() as u64);
        assert_eq!(out.comparison_passes, 0);
    }

    #[test]
    fn faulted_layer_reloads_from_disk_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = strat(dir.path());
        let snapshot = s.model.clone();
        s.model.layers_mut()[1].weights.flip_bit(4, 27).unwrap();
        let out = s.step(&[0.0; 4]).unwrap();
        assert_eq!(out.repaired_layers, 1);
        assert_eq!(out.faulted_layers, vec![1]);
        assert!(models_bit_identical(&s.model, &snapshot));
    }

    #[test]
    fn unreadable_disk_copy_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = strat(dir.path());
        std::fs::remove_file(&s.disk_path).unwrap();
        s.model.layers_mut()[0].weights.flip_bit(0, 20).unwrap();
        assert!(s.step(&[0.0; 4]).is_err());
    }

    #[test]
    fn metadata_overhead_is_small_for_big_models() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NetworkSpec::new(vec![64, 60, 10]).unwrap();
        let m = ModelParams::init(&spec, 1);
        assert!(m.param_count() >= 4096);
        let s = CbrStrategy::new(m, dir.path(), Duration::from_millis(30)).unwrap();
        let r = s.memory_report();
        assert!(r.overhead_percent() > 0.0);
        assert!(r.overhead_percent() <= 2.0);
        assert_eq!(r.redundancy_bytes, 0);
    }
}
