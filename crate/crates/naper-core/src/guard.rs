//! Ensemble guard: relation parameters delta = theta_1 + theta_m per
//! layer link the base model to each redundant. A single fused comparison
//! pass re-derives the sum and checks it against the stored delta; on a
//! mismatch, per-store checksums attribute the fault, inference halts for
//! the implicated model while detection keeps sweeping the remaining
//! layers, and recovery rebuilds the corrupted layer by inverting the
//! relation. Recovery is chunked so a scheduler can spread it across
//! frame slack.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::inject::{BitLocation, FaultTarget, StoreEntry, StoreId, StoreKind, StorePart};
use crate::model::{LayerParams, ModelParams};
use crate::nn;
use crate::par;
use crate::tensor::{tensor_add, tensor_sub, Checksum, Tensor};
use crate::{Error, Result};

/// Model ids: 0 is the base, 1..=M are the redundants.
pub const BASE_MODEL: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerHealth {
    Healthy,
    Faulty,
    Recovering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    Healthy,
    FaultInBase,
    /// Redundant model id (1-based).
    FaultInRedundant(usize),
    /// Redundant id whose relation tensor is corrupted.
    FaultInDelta(usize),
    /// Two or more of the three stores fail integrity in the same layer.
    Unrecoverable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerVerdict {
    pub layer: usize,
    pub result: VerdictKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputMode {
    FullEnsemble,
    PartialEnsemble(BTreeSet<usize>),
    SingleModel(usize),
    NoOutput,
}

#[derive(Debug, Clone)]
pub struct FaultReport {
    pub verdicts: Vec<LayerVerdict>,
    /// Models newly halted by this pass.
    pub models_halted: BTreeSet<usize>,
    pub output_mode: OutputMode,
}

impl FaultReport {
    pub fn any_fault(&self) -> bool {
        self.verdicts.iter().any(|v| v.result != VerdictKind::Healthy)
    }

    /// Distinct layers flagged by non-healthy verdicts.
    pub fn faulted_layers(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .verdicts
            .iter()
            .filter(|v| v.result != VerdictKind::Healthy)
            .map(|v| v.layer)
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryProgress {
    pub layers_recovered: usize,
    pub remaining: usize,
}

/// Comparison/checksum pass counters. A comparison pass is one
/// whole-layer relation or copy comparison; a checksum pass is one
/// whole-layer checksum recomputation.
#[derive(Debug, Default)]
pub struct PassCounters {
    comparisons: AtomicU64,
    checksums: AtomicU64,
}

impl PassCounters {
    pub fn comparisons(&self) -> u64 {
        self.comparisons.load(Ordering::Relaxed)
    }

    pub fn checksums(&self) -> u64 {
        self.checksums.load(Ordering::Relaxed)
    }

    fn bump_comparisons(&self, n: u64) {
        self.comparisons.fetch_add(n, Ordering::Relaxed);
    }

    fn bump_checksums(&self, n: u64) {
        self.checksums.fetch_add(n, Ordering::Relaxed);
    }
}

impl Clone for PassCounters {
    fn clone(&self) -> Self {
        PassCounters {
            comparisons: AtomicU64::new(self.comparisons()),
            checksums: AtomicU64::new(self.checksums()),
        }
    }
}

/// Base model, redundants, per-layer relation tensors, and per-store
/// checksums, plus health bookkeeping.
#[derive(Debug, Clone)]
pub struct GuardedEnsemble {
    base: ModelParams,
    redundants: Vec<ModelParams>,
    /// deltas[m][n]: relation tensors for redundant m+1, layer n.
    deltas: Vec<Vec<LayerParams>>,
    base_sums: Vec<Checksum>,
    red_sums: Vec<Vec<Checksum>>,
    delta_sums: Vec<Vec<Checksum>>,
    base_status: Vec<LayerHealth>,
    red_status: Vec<Vec<LayerHealth>>,
    delta_status: Vec<Vec<LayerHealth>>,
    model_active: Vec<bool>,
    counters: PassCounters,
    parallel: bool,
}

fn layer_checksum(layer: &LayerParams) -> Checksum {
    Checksum::of_parts(&[&layer.weights, &layer.bias])
}

/// Fused relation check: recompute the f32 sum of the two stores and
/// compare bit patterns against the stored delta, without materializing
/// the sum. Value-domain by necessity (delta is an f32 tensor), so a flip
/// below the rounding granularity can be absorbed; audit() closes that
/// gap out-of-band via checksums.
fn relation_holds(a: &Tensor, b: &Tensor, delta: &Tensor) -> bool {
    let (aa, bb, dd) = (a.as_slice(), b.as_slice(), delta.as_slice());
    debug_assert_eq!(aa.len(), bb.len());
    debug_assert_eq!(aa.len(), dd.len());
    aa.iter()
        .zip(bb)
        .zip(dd)
        .all(|((x, y), d)| (x + y).to_bits() == d.to_bits())
}

impl GuardedEnsemble {
    /// Build relation tensors and checksums for a base model and its
    /// redundants: delta = theta_1 + theta_m per layer for weights and
    /// bias. All models must share one architecture.
    pub fn build(base: ModelParams, redundants: Vec<ModelParams>) -> Result<Self> {
        if redundants.is_empty() {
            return Err(Error::Contract("guard needs at least one redundant model".into()));
        }
        let spec = base.spec();
        if let Some((i, r)) = redundants.iter().enumerate().find(|(_, r)| r.spec() != spec) {
            return Err(Error::Contract(format!(
                "redundant {} architecture {:?} differs from base {:?}",
                i + 1,
                r.spec().layer_sizes(),
                spec.layer_sizes()
            )));
        }
        let layers = base.layer_count();
        let mut deltas = Vec::with_capacity(redundants.len());
        for r in &redundants {
            let mut per_layer = Vec::with_capacity(layers);
            for (lb, lr) in base.layers().iter().zip(r.layers()) {
                per_layer.push(LayerParams {
                    weights: tensor_add(&lb.weights, &lr.weights)?,
                    bias: tensor_add(&lb.bias, &lr.bias)?,
                });
            }
            deltas.push(per_layer);
        }
        Self::from_parts(base, redundants, deltas, None)
    }

    /// Assemble a guard from stored parts (used when loading a persisted
    /// guard file). When `sums` is None the checksums are computed from
    /// the supplied data.
    pub(crate) fn from_parts(
        base: ModelParams,
        redundants: Vec<ModelParams>,
        deltas: Vec<Vec<LayerParams>>,
        sums: Option<(Vec<Checksum>, Vec<Vec<Checksum>>, Vec<Vec<Checksum>>)>,
    ) -> Result<Self> {
        let layers = base.layer_count();
        let spec = base.spec();
        for (i, r) in redundants.iter().enumerate() {
            if r.spec() != spec {
                return Err(Error::Contract(format!(
                    "redundant {} architecture {:?} differs from base {:?}",
                    i + 1,
                    r.spec().layer_sizes(),
                    spec.layer_sizes()
                )));
            }
        }
        if deltas.len() != redundants.len() || deltas.iter().any(|d| d.len() != layers) {
            return Err(Error::Contract("delta tensor count does not match models".into()));
        }
        for (m, per_layer) in deltas.iter().enumerate() {
            for (n, d) in per_layer.iter().enumerate() {
                let b = &base.layers()[n];
                if d.weights.shape() != b.weights.shape() || d.bias.shape() != b.bias.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "delta shape for redundant {} layer {n} does not match the model",
                        m + 1
                    )));
                }
            }
        }
        let (base_sums, red_sums, delta_sums) = match sums {
            Some(s) => s,
            None => {
                let base_sums = base.layers().iter().map(layer_checksum).collect();
                let red_sums = redundants
                    .iter()
                    .map(|r| r.layers().iter().map(layer_checksum).collect())
                    .collect();
                let delta_sums = deltas
                    .iter()
                    .map(|d| d.iter().map(layer_checksum).collect())
                    .collect();
                (base_sums, red_sums, delta_sums)
            }
        };
        let m = redundants.len();
        Ok(GuardedEnsemble {
            base,
            redundants,
            deltas,
            base_sums,
            red_sums,
            delta_sums,
            base_status: vec![LayerHealth::Healthy; layers],
            red_status: vec![vec![LayerHealth::Healthy; layers]; m],
            delta_status: vec![vec![LayerHealth::Healthy; layers]; m],
            model_active: vec![true; m + 1],
            counters: PassCounters::default(),
            parallel: cfg!(feature = "parallel"),
        })
    }

    pub fn base(&self) -> &ModelParams {
        &self.base
    }

    pub fn redundants(&self) -> &[ModelParams] {
        &self.redundants
    }

    pub fn redundant_count(&self) -> usize {
        self.redundants.len()
    }

    pub fn model_count(&self) -> usize {
        self.redundants.len() + 1
    }

    pub fn layer_count(&self) -> usize {
        self.base.layer_count()
    }

    pub fn deltas(&self, m: usize) -> &[LayerParams] {
        &self.deltas[m - 1]
    }

    pub fn checksums(&self) -> (&[Checksum], &[Vec<Checksum>], &[Vec<Checksum>]) {
        (&self.base_sums, &self.red_sums, &self.delta_sums)
    }

    pub fn model_active(&self, id: usize) -> bool {
        self.model_active[id]
    }

    pub fn active_models(&self) -> Vec<usize> {
        (0..self.model_count()).filter(|&i| self.model_active[i]).collect()
    }

    pub fn model(&self, id: usize) -> &ModelParams {
        if id == BASE_MODEL {
            &self.base
        } else {
            &self.redundants[id - 1]
        }
    }

    pub fn counters(&self) -> &PassCounters {
        &self.counters
    }

    pub fn reset_counters(&self) {
        self.counters.comparisons.store(0, Ordering::Relaxed);
        self.counters.checksums.store(0, Ordering::Relaxed);
    }

    /// Switch between the overlapped (detection alongside inference) and
    /// strictly sequential execution of guarded steps. Outputs are
    /// identical; only wall-clock behavior differs.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel && cfg!(feature = "parallel");
    }

    pub fn layer_status(&self, store: StoreKind, layer: usize) -> LayerHealth {
        match store {
            StoreKind::Base => self.base_status[layer],
            StoreKind::Redundant(m) => self.red_status[m - 1][layer],
            StoreKind::Delta(m) => self.delta_status[m - 1][layer],
        }
    }

    /// Two-step check of one layer against redundant `m` (1-based).
    /// Step 1 recomputes the relation sum and compares it to the stored
    /// delta in one pass; only on a mismatch does step 2 recompute the
    /// two model checksums to attribute the fault.
    pub fn detect_layer(&self, m: usize, layer: usize) -> LayerVerdict {
        let lb = &self.base.layers()[layer];
        let lr = &self.redundants[m - 1].layers()[layer];
        let ld = &self.deltas[m - 1][layer];
        self.counters.bump_comparisons(1);
        if relation_holds(&lb.weights, &lr.weights, &ld.weights)
            && relation_holds(&lb.bias, &lr.bias, &ld.bias)
        {
            return LayerVerdict {
                layer,
                result: VerdictKind::Healthy,
            };
        }
        self.counters.bump_checksums(2);
        let base_ok = layer_checksum(lb).int_sum == self.base_sums[layer].int_sum;
        let red_ok = layer_checksum(lr).int_sum == self.red_sums[m - 1][layer].int_sum;
        let result = match (base_ok, red_ok) {
            (true, true) => VerdictKind::FaultInDelta(m),
            (false, true) => VerdictKind::FaultInBase,
            (true, false) => VerdictKind::FaultInRedundant(m),
            (false, false) => VerdictKind::Unrecoverable,
        };
        LayerVerdict { layer, result }
    }

    fn checksum_ok(&self, store: StoreKind, layer: usize) -> bool {
        self.counters.bump_checksums(1);
        match store {
            StoreKind::Base => {
                layer_checksum(&self.base.layers()[layer]).int_sum == self.base_sums[layer].int_sum
            }
            StoreKind::Redundant(m) => {
                layer_checksum(&self.redundants[m - 1].layers()[layer]).int_sum
                    == self.red_sums[m - 1][layer].int_sum
            }
            StoreKind::Delta(m) => {
                layer_checksum(&self.deltas[m - 1][layer]).int_sum
                    == self.delta_sums[m - 1][layer].int_sum
            }
        }
    }

    /// Detection sweep over all layers for the frame-start active set.
    /// Pairings where base and redundant are both active take the
    /// relation check; an active model with no active partner is
    /// verified against its layer checksums instead. The sweep never
    /// stops early: later layers are still checked after a fault so
    /// every faulted layer gets marked.
    fn detection_sweep(&self, active: &[bool]) -> (Vec<LayerVerdict>, Vec<(StoreKind, usize)>) {
        let mut verdicts = Vec::new();
        let mut faulted: Vec<(StoreKind, usize)> = Vec::new();
        let paired_base = active[BASE_MODEL] && (1..=self.redundant_count()).any(|m| active[m]);
        for layer in 0..self.layer_count() {
            if active[BASE_MODEL] {
                if paired_base {
                    for m in 1..=self.redundant_count() {
                        if !active[m] {
                            continue;
                        }
                        let v = self.detect_layer(m, layer);
                        match v.result {
                            VerdictKind::Healthy => {}
                            VerdictKind::FaultInBase => faulted.push((StoreKind::Base, layer)),
                            VerdictKind::FaultInRedundant(r) => {
                                faulted.push((StoreKind::Redundant(r), layer))
                            }
                            VerdictKind::FaultInDelta(r) => {
                                faulted.push((StoreKind::Delta(r), layer))
                            }
                            VerdictKind::Unrecoverable => {
                                faulted.push((StoreKind::Base, layer));
                                faulted.push((StoreKind::Redundant(m), layer));
                            }
                        }
                        verdicts.push(v);
                    }
                } else {
                    let ok = self.checksum_ok(StoreKind::Base, layer);
                    let result = if ok {
                        VerdictKind::Healthy
                    } else {
                        faulted.push((StoreKind::Base, layer));
                        VerdictKind::FaultInBase
                    };
                    verdicts.push(LayerVerdict { layer, result });
                }
            }
            for m in 1..=self.redundant_count() {
                if !active[m] || (active[BASE_MODEL] && paired_base) {
                    continue;
                }
                let ok = self.checksum_ok(StoreKind::Redundant(m), layer);
                let result = if ok {
                    VerdictKind::Healthy
                } else {
                    faulted.push((StoreKind::Redundant(m), layer));
                    VerdictKind::FaultInRedundant(m)
                };
                verdicts.push(LayerVerdict { layer, result });
            }
        }
        (verdicts, faulted)
    }

    fn mark_faulty(&mut self, store: StoreKind, layer: usize) {
        match store {
            StoreKind::Base => self.base_status[layer] = LayerHealth::Faulty,
            StoreKind::Redundant(m) => self.red_status[m - 1][layer] = LayerHealth::Faulty,
            StoreKind::Delta(m) => self.delta_status[m - 1][layer] = LayerHealth::Faulty,
        }
    }

    fn implicated_model(store: StoreKind) -> usize {
        match store {
            StoreKind::Base => BASE_MODEL,
            StoreKind::Redundant(m) | StoreKind::Delta(m) => m,
        }
    }

    /// One protected inference: detection interleaved with the forward
    /// passes. Models implicated by a verdict are halted from the faulted
    /// layer onward and their partial activations discarded; detection
    /// still sweeps every layer. Scores come from the models that
    /// completed all layers. Returns None scores with NoOutput when no
    /// model survived.
    pub fn guarded_inference(&mut self, x: &[f32]) -> Result<(Option<Vec<f32>>, FaultReport)> {
        let active: Vec<bool> = self.model_active.clone();
        if !active.iter().any(|&a| a) {
            return Err(Error::Contract("guarded_inference requires an active model".into()));
        }
        let (verdicts, faulted, forwards) = if self.parallel {
            // Detection runs alongside the member forward passes; a
            // halted model's already-computed output is discarded below,
            // mirroring in-flight inference being thrown away.
            let this: &Self = &*self;
            let (sweep, fwd) = par::join(
                || this.detection_sweep(&active),
                || -> Result<Vec<Option<Vec<f32>>>> {
                    let outs = par::map_indexed(active.len(), |id| {
                        if active[id] {
                            nn::forward(this.model(id), x).map(Some)
                        } else {
                            Ok(None)
                        }
                    });
                    outs.into_iter().collect()
                },
            );
            let (verdicts, faulted) = sweep;
            (verdicts, faulted, Some(fwd?))
        } else {
            let (verdicts, faulted) = self.detection_sweep(&active);
            (verdicts, faulted, None)
        };

        let mut halted: BTreeSet<usize> = BTreeSet::new();
        for &(store, layer) in &faulted {
            self.mark_faulty(store, layer);
            halted.insert(Self::implicated_model(store));
        }
        for &id in &halted {
            self.model_active[id] = false;
        }

        let survivors: Vec<usize> = (0..self.model_count())
            .filter(|id| active[*id] && !halted.contains(id))
            .collect();
        let scores = if survivors.is_empty() {
            None
        } else {
            match forwards {
                Some(per_model) => {
                    let picked: Vec<Vec<f32>> = survivors
                        .iter()
                        .map(|&id| per_model[id].clone().expect("active model has output"))
                        .collect();
                    Some(nn::mean_scores(&picked))
                }
                None => {
                    let models: Vec<&ModelParams> = survivors.iter().map(|&id| self.model(id)).collect();
                    Some(nn::ensemble_infer(&models, x)?)
                }
            }
        };

        let output_mode = match survivors.len() {
            0 => OutputMode::NoOutput,
            1 => OutputMode::SingleModel(survivors[0]),
            n if n == self.model_count() => OutputMode::FullEnsemble,
            _ => OutputMode::PartialEnsemble(survivors.iter().copied().collect()),
        };
        Ok((
            scores,
            FaultReport {
                verdicts,
                models_halted: halted,
                output_mode,
            },
        ))
    }

    /// Full integrity sweep: every store of every layer is verified
    /// against its stored checksum, independently of the relation check,
    /// catching flips that step-1 rounding absorbed. Failing stores are
    /// marked faulty and their models deactivated.
    pub fn audit(&mut self) -> FaultReport {
        let mut verdicts = Vec::new();
        let mut faulted: Vec<(StoreKind, usize)> = Vec::new();
        for layer in 0..self.layer_count() {
            for m in 1..=self.redundant_count() {
                let base_ok = self.checksum_ok(StoreKind::Base, layer);
                let red_ok = self.checksum_ok(StoreKind::Redundant(m), layer);
                let delta_ok = self.checksum_ok(StoreKind::Delta(m), layer);
                let fails = [!base_ok, !red_ok, !delta_ok].iter().filter(|&&f| f).count();
                let result = if fails >= 2 {
                    VerdictKind::Unrecoverable
                } else if !base_ok {
                    VerdictKind::FaultInBase
                } else if !red_ok {
                    VerdictKind::FaultInRedundant(m)
                } else if !delta_ok {
                    VerdictKind::FaultInDelta(m)
                } else {
                    VerdictKind::Healthy
                };
                if !base_ok {
                    faulted.push((StoreKind::Base, layer));
                }
                if !red_ok {
                    faulted.push((StoreKind::Redundant(m), layer));
                }
                if !delta_ok {
                    faulted.push((StoreKind::Delta(m), layer));
                }
                verdicts.push(LayerVerdict { layer, result });
            }
        }
        let mut halted = BTreeSet::new();
        for &(store, layer) in &faulted {
            self.mark_faulty(store, layer);
            let id = Self::implicated_model(store);
            if self.model_active[id] {
                self.model_active[id] = false;
                halted.insert(id);
            }
        }
        let survivors: Vec<usize> = self.active_models();
        let output_mode = match survivors.len() {
            0 => OutputMode::NoOutput,
            1 => OutputMode::SingleModel(survivors[0]),
            n if n == self.model_count() => OutputMode::FullEnsemble,
            _ => OutputMode::PartialEnsemble(survivors.into_iter().collect()),
        };
        FaultReport {
            verdicts,
            models_halted: halted,
            output_mode,
        }
    }

    fn verify_or_escalate(&self, store: StoreKind, layer: usize, role: &str) -> Result<()> {
        if !self.checksum_ok(store, layer) {
            return Err(Error::Unrecoverable {
                layer,
                msg: format!("{role} store failed its integrity re-check before recovery"),
            });
        }
        Ok(())
    }

    /// Rebuild one store of one layer: theta_1 = delta − theta_m,
    /// theta_m = delta − theta_1, or delta = theta_1 + theta_m. The two
    /// stores not implicated are re-checked against their checksums
    /// before anything is written; the restored store is verified
    /// afterwards. A healthy verdict is a no-op.
    pub fn recover_layer(&mut self, verdict: &LayerVerdict) -> Result<()> {
        let layer = verdict.layer;
        match verdict.result {
            VerdictKind::Healthy => Ok(()),
            VerdictKind::Unrecoverable => Err(Error::Unrecoverable {
                layer,
                msg: "verdict marks two or more stores corrupted".into(),
            }),
            VerdictKind::FaultInBase => {
                // Any redundant whose model and delta verify can donate.
                let donor = (1..=self.redundant_count()).find(|&m| {
                    self.checksum_ok(StoreKind::Redundant(m), layer)
                        && self.checksum_ok(StoreKind::Delta(m), layer)
                });
                let m = donor.ok_or(Error::Unrecoverable {
                    layer,
                    msg: "no redundant/delta pair verifies for base recovery".into(),
                })?;
                self.base_status[layer] = LayerHealth::Recovering;
                let ld = &self.deltas[m - 1][layer];
                let lr = &self.redundants[m - 1].layers()[layer];
                let w = tensor_sub(&ld.weights, &lr.weights)?;
                let b = tensor_sub(&ld.bias, &lr.bias)?;
                let dst = &mut self.base.layers_mut()[layer];
                dst.weights.copy_from(&w)?;
                dst.bias.copy_from(&b)?;
                if !self.checksum_ok(StoreKind::Base, layer) {
                    self.base_status[layer] = LayerHealth::Faulty;
                    return Err(Error::Unrecoverable {
                        layer,
                        msg: "restored base layer does not match its stored checksum".into(),
                    });
                }
                self.base_status[layer] = LayerHealth::Healthy;
                Ok(())
            }
            VerdictKind::FaultInRedundant(m) => {
                self.verify_or_escalate(StoreKind::Base, layer, "base")?;
                self.verify_or_escalate(StoreKind::Delta(m), layer, "delta")?;
                self.red_status[m - 1][layer] = LayerHealth::Recovering;
                let ld = &self.deltas[m - 1][layer];
                let lb = &self.base.layers()[layer];
                let w = tensor_sub(&ld.weights, &lb.weights)?;
                let b = tensor_sub(&ld.bias, &lb.bias)?;
                let dst = &mut self.redundants[m - 1].layers_mut()[layer];
                dst.weights.copy_from(&w)?;
                dst.bias.copy_from(&b)?;
                if !self.checksum_ok(StoreKind::Redundant(m), layer) {
                    self.red_status[m - 1][layer] = LayerHealth::Faulty;
                    return Err(Error::Unrecoverable {
                        layer,
                        msg: "restored redundant layer does not match its stored checksum".into(),
                    });
                }
                self.red_status[m - 1][layer] = LayerHealth::Healthy;
                Ok(())
            }
            VerdictKind::FaultInDelta(m) => {
                self.verify_or_escalate(StoreKind::Base, layer, "base")?;
                self.verify_or_escalate(StoreKind::Redundant(m), layer, "redundant")?;
                self.delta_status[m - 1][layer] = LayerHealth::Recovering;
                let lb = &self.base.layers()[layer];
                let lr = &self.redundants[m - 1].layers()[layer];
                let w = tensor_add(&lb.weights, &lr.weights)?;
                let b = tensor_add(&lb.bias, &lr.bias)?;
                let dst = &mut self.deltas[m - 1][layer];
                dst.weights.copy_from(&w)?;
                dst.bias.copy_from(&b)?;
                if !self.checksum_ok(StoreKind::Delta(m), layer) {
                    self.delta_status[m - 1][layer] = LayerHealth::Faulty;
                    return Err(Error::Unrecoverable {
                        layer,
                        msg: "recomputed delta does not match its stored checksum".into(),
                    });
                }
                self.delta_status[m - 1][layer] = LayerHealth::Healthy;
                Ok(())
            }
        }
    }

    /// Faulted (store, layer) units charged to one model, ascending layer
    /// order. A redundant's delta tensors recover under the same model.
    fn recovery_units(&self, model: usize) -> Vec<LayerVerdict> {
        let mut units = Vec::new();
        for layer in 0..self.layer_count() {
            if model == BASE_MODEL {
                if self.base_status[layer] == LayerHealth::Faulty {
                    units.push(LayerVerdict {
                        layer,
                        result: VerdictKind::FaultInBase,
                    });
                }
            } else {
                if self.red_status[model - 1][layer] == LayerHealth::Faulty {
                    units.push(LayerVerdict {
                        layer,
                        result: VerdictKind::FaultInRedundant(model),
                    });
                }
                if self.delta_status[model - 1][layer] == LayerHealth::Faulty {
                    units.push(LayerVerdict {
                        layer,
                        result: VerdictKind::FaultInDelta(model),
                    });
                }
            }
        }
        units
    }

    /// How many faulted layer units model `id` still has.
    pub fn remaining_faulted(&self, id: usize) -> usize {
        self.recovery_units(id).len()
    }

    /// Recover up to `layer_budget` faulted layers of one model,
    /// ascending. The model rejoins the active set only once nothing is
    /// left; calling repeatedly until done is the intended use.
    pub fn recover_model(&mut self, model: usize, layer_budget: usize) -> Result<RecoveryProgress> {
        if model >= self.model_count() {
            return Err(Error::OutOfRange(format!(
                "model {model} out of range for {} models",
                self.model_count()
            )));
        }
        let units = self.recovery_units(model);
        let mut recovered = 0;
        for verdict in units.iter().take(layer_budget) {
            self.recover_layer(verdict)?;
            recovered += 1;
        }
        let remaining = self.recovery_units(model).len();
        if remaining == 0 {
            self.model_active[model] = true;
        }
        Ok(RecoveryProgress {
            layers_recovered: recovered,
            remaining,
        })
    }
}

impl FaultTarget for GuardedEnsemble {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        let mut out = Vec::new();
        let push_model = |out: &mut Vec<StoreEntry>, kind: StoreKind, layers: &[LayerParams]| {
            for (n, l) in layers.iter().enumerate() {
                out.push(StoreEntry::tensor(kind, n, StorePart::Weights, l.weights.len()));
                out.push(StoreEntry::tensor(kind, n, StorePart::Bias, l.bias.len()));
                out.push(StoreEntry::meta(kind, n));
            }
        };
        push_model(&mut out, StoreKind::Base, self.base.layers());
        for (i, r) in self.redundants.iter().enumerate() {
            push_model(&mut out, StoreKind::Redundant(i + 1), r.layers());
        }
        for (i, d) in self.deltas.iter().enumerate() {
            push_model(&mut out, StoreKind::Delta(i + 1), d);
        }
        out
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        let StoreId { kind, layer, part } = loc.store;
        if layer >= self.layer_count() {
            return Err(Error::OutOfRange(format!("layer {layer} out of range")));
        }
        match part {
            StorePart::Weights | StorePart::Bias => {
                let layer_ref: &mut LayerParams = match kind {
                    StoreKind::Base => &mut self.base.layers_mut()[layer],
                    StoreKind::Redundant(m) => &mut self.redundants[m - 1].layers_mut()[layer],
                    StoreKind::Delta(m) => &mut self.deltas[m - 1][layer],
                };
                let t = if part == StorePart::Weights {
                    &mut layer_ref.weights
                } else {
                    &mut layer_ref.bias
                };
                t.flip_bit(loc.elem_index, loc.bit_index)
            }
            StorePart::Meta => {
                if loc.bit_index > 63 {
                    return Err(Error::OutOfRange("meta words are 64-bit".into()));
                }
                let sum = match kind {
                    StoreKind::Base => &mut self.base_sums[layer],
                    StoreKind::Redundant(m) => &mut self.red_sums[m - 1][layer],
                    StoreKind::Delta(m) => &mut self.delta_sums[m - 1][layer],
                };
                match loc.elem_index {
                    0 => sum.int_sum ^= 1u64 << loc.bit_index,
                    1 => {
                        sum.value_sum =
                            f64::from_bits(sum.value_sum.to_bits() ^ (1u64 << loc.bit_index))
                    }
                    _ => {
                        return Err(Error::OutOfRange(
                            "meta store has two 64-bit words".into(),
                        ))
                    }
                }
                Ok(())
            }
        }
    }
}
