//! Seeded, reproducible bit-flip injection over parameter stores.
//! FixedCount plants exactly round(bits × ber) distinct flips uniformly
//! over the selected bit space; Bernoulli draws the flip count from the
//! matching binomial first, which is distributionally identical to
//! per-bit coin flips. Checksum words are excluded unless explicitly
//! included.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::{Error, Result};

/// Named presets from the evaluated range.
pub const LOW_FAULT_RATE: f64 = 1e-7;
pub const HIGH_FAULT_RATE: f64 = 1e-5;
const BER_MIN: f64 = 1e-9;
const BER_MAX: f64 = 1e-3;

/// Which store a flip lands in. Redundant and delta ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StoreKind {
    Base,
    Redundant(usize),
    Delta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StorePart {
    Weights,
    Bias,
    /// The two 64-bit checksum words of a (store, layer).
    Meta,
}

/// Addresses one tensor (or checksum pair) of one layer of one store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StoreId {
    pub kind: StoreKind,
    pub layer: usize,
    pub part: StorePart,
}

impl fmt::Display for StoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            StoreKind::Base => "base".to_string(),
            StoreKind::Redundant(m) => format!("r{m}"),
            StoreKind::Delta(m) => format!("d{m}"),
        };
        let part = match self.part {
            StorePart::Weights => "weights",
            StorePart::Bias => "bias",
            StorePart::Meta => "meta",
        };
        write!(f, "{kind}.L{}.{part}", self.layer)
    }
}

/// One addressable bit: store, element index, bit index (0 = LSB).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitLocation {
    pub store: StoreId,
    pub elem_index: usize,
    pub bit_index: u32,
}

/// Store selector for targeting; `All` covers every store the target
/// exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreSelector {
    Base,
    Redundant(usize),
    Delta(usize),
    All,
}

impl StoreSelector {
    pub fn matches(&self, kind: StoreKind) -> bool {
        match (self, kind) {
            (StoreSelector::All, _) => true,
            (StoreSelector::Base, StoreKind::Base) => true,
            (StoreSelector::Redundant(a), StoreKind::Redundant(b)) => *a == b,
            (StoreSelector::Delta(a), StoreKind::Delta(b)) => *a == b,
            _ => false,
        }
    }
}

impl FromStr for StoreSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(StoreSelector::All);
        }
        if s == "base" {
            return Ok(StoreSelector::Base);
        }
        let parse_id = |rest: &str| -> Result<usize> {
            rest.parse().map_err(|_| Error::Config(format!("bad store selector '{s}'")))
        };
        if let Some(rest) = s.strip_prefix('r') {
            return Ok(StoreSelector::Redundant(parse_id(rest)?));
        }
        if let Some(rest) = s.strip_prefix('d') {
            return Ok(StoreSelector::Delta(parse_id(rest)?));
        }
        Err(Error::Config(format!("bad store selector '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InjectionMode {
    /// Exactly max(1, round(total_bits × ber)) distinct flips.
    #[default]
    FixedCount,
    /// Every bit flips independently with probability ber.
    Bernoulli,
}

impl FromStr for InjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed" | "fixed-count" => Ok(InjectionMode::FixedCount),
            "bernoulli" => Ok(InjectionMode::Bernoulli),
            other => Err(Error::Config(format!("bad injection mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InjectionConfig {
    pub ber: f64,
    pub mode: InjectionMode,
    pub seed: u64,
    pub targets: Vec<StoreSelector>,
    /// Extend the bit space over the checksum words of selected stores.
    pub include_metadata: bool,
}

impl InjectionConfig {
    pub fn new(ber: f64, mode: InjectionMode, seed: u64, targets: Vec<StoreSelector>) -> Self {
        InjectionConfig {
            ber,
            mode,
            seed,
            targets,
            include_metadata: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(BER_MIN..=BER_MAX).contains(&self.ber) {
            return Err(Error::Config(format!(
                "ber {} outside accepted range [{BER_MIN}, {BER_MAX}]",
                self.ber
            )));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("injection targets are empty".into()));
        }
        Ok(())
    }
}

/// One injectable store: element count and element width in bits.
#[derive(Debug, Clone, Copy)]
pub struct StoreEntry {
    pub id: StoreId,
    pub elems: u64,
    pub bits_per_elem: u32,
}

impl StoreEntry {
    pub fn tensor(kind: StoreKind, layer: usize, part: StorePart, elems: usize) -> Self {
        StoreEntry {
            id: StoreId { kind, layer, part },
            elems: elems as u64,
            bits_per_elem: 32,
        }
    }

    pub fn meta(kind: StoreKind, layer: usize) -> Self {
        StoreEntry {
            id: StoreId {
                kind,
                layer,
                part: StorePart::Meta,
            },
            elems: 2,
            bits_per_elem: 64,
        }
    }

    pub fn bits(&self) -> u64 {
        self.elems * self.bits_per_elem as u64
    }
}

/// Anything whose stores can be enumerated and flipped: models, guards,
/// and strategies.
pub trait FaultTarget {
    /// All stores in canonical order, including checksum metadata.
    fn fault_stores(&self) -> Vec<StoreEntry>;
    fn flip_at(&mut self, loc: &BitLocation) -> Result<()>;
}

/// Concatenated bit space over the stores chosen by the selectors.
#[derive(Debug, Clone)]
pub struct StoreSpace {
    entries: Vec<StoreEntry>,
}

impl StoreSpace {
    pub fn new(entries: Vec<StoreEntry>) -> Self {
        StoreSpace { entries }
    }

    pub fn of_target(
        target: &dyn FaultTarget,
        selectors: &[StoreSelector],
        include_metadata: bool,
    ) -> Self {
        let entries = target
            .fault_stores()
            .into_iter()
            .filter(|e| {
                (include_metadata || e.id.part != StorePart::Meta)
                    && selectors.iter().any(|s| s.matches(e.id.kind))
            })
            .collect();
        StoreSpace { entries }
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn total_bits(&self) -> u64 {
        self.entries.iter().map(|e| e.bits()).sum()
    }

    fn locate(&self, mut offset: u64) -> BitLocation {
        for e in &self.entries {
            if offset < e.bits() {
                return BitLocation {
                    store: e.id,
                    elem_index: (offset / e.bits_per_elem as u64) as usize,
                    bit_index: (offset % e.bits_per_elem as u64) as u32,
                };
            }
            offset -= e.bits();
        }
        unreachable!("offset beyond store space");
    }
}

/// A batch of applied flips.
#[derive(Debug, Clone, Serialize)]
pub struct FaultEvent {
    /// Virtual or wall timestamp, microseconds.
    pub time_us: u64,
    #[serde(skip)]
    pub locations: Vec<BitLocation>,
}

impl FaultEvent {
    /// JSON log lines, one per location: {"time", "store", "elem", "bit"}.
    pub fn log_lines(&self) -> Vec<String> {
        self.locations
            .iter()
            .map(|loc| {
                format!(
                    "{{\"time\":{},\"store\":\"{}\",\"elem\":{},\"bit\":{}}}",
                    self.time_us, loc.store, loc.elem_index, loc.bit_index
                )
            })
            .collect()
    }
}

/// Plan distinct flip locations over a store space, fully determined by
/// the seed.
pub fn plan_injection(cfg: &InjectionConfig, space: &StoreSpace) -> Result<Vec<BitLocation>> {
    cfg.validate()?;
    let total = space.total_bits();
    if total == 0 {
        return Err(Error::Config("selected stores have no bits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = match cfg.mode {
        InjectionMode::FixedCount => {
            let k = (total as f64 * cfg.ber).round() as u64;
            k.max(1).min(total)
        }
        InjectionMode::Bernoulli => {
            let bin = Binomial::new(total, cfg.ber)
                .map_err(|e| Error::Config(format!("binomial: {e}")))?;
            bin.sample(&mut rng)
        }
    };
    let mut seen = HashSet::with_capacity(count as usize);
    let mut plan = Vec::with_capacity(count as usize);
    while (plan.len() as u64) < count {
        let offset = rng.gen_range(0..total);
        if seen.insert(offset) {
            plan.push(space.locate(offset));
        }
    }
    Ok(plan)
}

/// Validate every location against the target, then apply each flip
/// exactly once. Nothing is mutated when any address is invalid.
pub fn apply_injection(
    target: &mut dyn FaultTarget,
    plan: &[BitLocation],
    time_us: u64,
) -> Result<FaultEvent> {
    let stores = target.fault_stores();
    for loc in plan {
        let entry = stores
            .iter()
            .find(|e| e.id == loc.store)
            .ok_or_else(|| Error::OutOfRange(format!("no store {}", loc.store)))?;
        if (loc.elem_index as u64) >= entry.elems || loc.bit_index >= entry.bits_per_elem {
            return Err(Error::OutOfRange(format!(
                "location {}[{}] bit {} outside store",
                loc.store, loc.elem_index, loc.bit_index
            )));
        }
    }
    for loc in plan {
        target.flip_at(loc)?;
    }
    Ok(FaultEvent {
        time_us,
        locations: plan.to_vec(),
    })
}

impl FaultTarget for crate::model::ModelParams {
    fn fault_stores(&self) -> Vec<StoreEntry> {
        let mut out = Vec::new();
        for (n, l) in self.layers().iter().enumerate() {
            out.push(StoreEntry::tensor(StoreKind::Base, n, StorePart::Weights, l.weights.len()));
            out.push(StoreEntry::tensor(StoreKind::Base, n, StorePart::Bias, l.bias.len()));
        }
        out
    }

    fn flip_at(&mut self, loc: &BitLocation) -> Result<()> {
        if loc.store.kind != StoreKind::Base {
            return Err(Error::OutOfRange(format!(
                "model has no store {}",
                loc.store
            )));
        }
        if loc.store.layer >= self.layer_count() {
            return Err(Error::OutOfRange(format!("layer {} out of range", loc.store.layer)));
        }
        let layer = &mut self.layers_mut()[loc.store.layer];
        let t = match loc.store.part {
            StorePart::Weights => &mut layer.weights,
            StorePart::Bias => &mut layer.bias,
            StorePart::Meta => {
                return Err(Error::OutOfRange("plain model has no checksum words".into()))
            }
        };
        t.flip_bit(loc.elem_index, loc.bit_index)
    }
}
