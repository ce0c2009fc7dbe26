//! Deterministic virtual-time simulation of the soft real-time loop:
//! frame arrivals, per-frame detection and inference charged from a cost
//! profile, scheduled fault events, slack-time model selection, and
//! chunked recovery.

pub mod config;
pub mod profile;
pub mod run;
pub mod select;
pub mod trace;

pub use config::{FaultTargets, SimConfig, StrategyKind};
pub use profile::{profile_costs, CostProfile, CostSource};
pub use run::{run_sim, run_sim_with, SimWorld};
pub use select::{select_models, Selection};
pub use trace::{FrameRecord, SimEvent, SimSummary, SimTrace};

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::model::ModelParams;
use crate::nn;
use crate::Result;

/// Expected accuracy for every nonempty subset of a model set, measured
/// on a validation split. Subsets are bitmasks over model indices.
#[derive(Debug, Clone)]
pub struct AccuracyTable {
    acc: BTreeMap<u32, f64>,
    n_models: usize,
}

impl AccuracyTable {
    /// Evaluate every nonempty subset (at most 2^n − 1 evaluations; the
    /// desk scale keeps n tiny).
    pub fn build(models: &[ModelParams], validation: &Dataset) -> Result<Self> {
        let n = models.len();
        let mut acc = BTreeMap::new();
        for mask in 1u32..(1 << n) {
            let subset: Vec<&ModelParams> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &models[i])
                .collect();
            acc.insert(mask, nn::evaluate(&subset, validation)?);
        }
        Ok(AccuracyTable { acc, n_models: n })
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn mask_of(ids: &[usize]) -> u32 {
        ids.iter().fold(0u32, |m, &i| m | (1 << i))
    }

    /// Accuracy of a model subset; the empty set scores zero.
    pub fn get_mask(&self, mask: u32) -> Option<f64> {
        if mask == 0 {
            return Some(0.0);
        }
        self.acc.get(&mask).copied()
    }

    pub fn get(&self, ids: &[usize]) -> Option<f64> {
        self.get_mask(Self::mask_of(ids))
    }

    /// Build directly from precomputed entries (tests and tiny tools).
    pub fn from_entries(n_models: usize, entries: &[(u32, f64)]) -> Self {
        AccuracyTable {
            acc: entries.iter().copied().collect(),
            n_models,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::model::NetworkSpec;
    use crate::nn::{train_independent, TrainConfig};

    #[test]
    fn single_model_entry_matches_evaluate() {
        let data = gen_synthetic(3, 300, 8, 4, 1.0).unwrap();
        let spec = NetworkSpec::new(vec![8, 12, 4]).unwrap();
        let m = ModelParams::init(&spec, 4);
        let table = AccuracyTable::build(std::slice::from_ref(&m), &data).unwrap();
        let direct = nn::evaluate(&[&m], &data).unwrap();
        assert_eq!(table.get(&[0]).unwrap(), direct);
    }

    #[test]
    fn duplicate_models_score_like_the_single_model() {
        let data = gen_synthetic(3, 300, 8, 4, 1.0).unwrap();
        let spec = NetworkSpec::new(vec![8, 12, 4]).unwrap();
        let m = ModelParams::init(&spec, 4);
        let table = AccuracyTable::build(&[m.clone(), m], &data).unwrap();
        assert_eq!(table.get(&[0, 1]).unwrap(), table.get(&[0]).unwrap());
    }

    #[test]
    fn independently_trained_pair_is_no_worse_than_the_weaker_member() {
        let data = gen_synthetic(21, 1500, 16, 10, 2.0).unwrap();
        let (train, val) = data.split(1000).unwrap();
        let spec = NetworkSpec::new(vec![16, 24, 10]).unwrap();
        let cfg = |seed| TrainConfig {
            seed,
            epochs: 15,
            learning_rate: 0.1,
            batch_size: 32,
        };
        let a = train_independent(&spec, &train, &cfg(1)).unwrap();
        let b = train_independent(&spec, &train, &cfg(2)).unwrap();
        let table = AccuracyTable::build(&[a, b], &val).unwrap();
        let pair = table.get(&[0, 1]).unwrap();
        let min = table.get(&[0]).unwrap().min(table.get(&[1]).unwrap());
        assert!(pair >= min, "pair {pair} below weaker member {min}");
    }
}
