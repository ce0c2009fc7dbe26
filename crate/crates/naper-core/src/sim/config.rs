//! Flat key=value simulation configs. Unknown keys and malformed values
//! are errors naming the key, so a typo never silently changes a run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::inject::{InjectionMode, StoreSelector, HIGH_FAULT_RATE, LOW_FAULT_RATE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Naper,
    Tmr,
    Dro,
    Cbr,
    Eft,
    Unprotected,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Naper => "naper",
            StrategyKind::Tmr => "tmr",
            StrategyKind::Dro => "dro",
            StrategyKind::Cbr => "cbr",
            StrategyKind::Eft => "eft",
            StrategyKind::Unprotected => "unprotected",
        }
    }

    pub fn all() -> [StrategyKind; 6] {
        [
            StrategyKind::Naper,
            StrategyKind::Tmr,
            StrategyKind::Dro,
            StrategyKind::Cbr,
            StrategyKind::Eft,
            StrategyKind::Unprotected,
        ]
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naper" => Ok(StrategyKind::Naper),
            "tmr" => Ok(StrategyKind::Tmr),
            "dro" => Ok(StrategyKind::Dro),
            "cbr" => Ok(StrategyKind::Cbr),
            "eft" => Ok(StrategyKind::Eft),
            "unprotected" => Ok(StrategyKind::Unprotected),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Per-event targeting: rotate over the strategy's replicated stores
/// with a seeded pick, or use an explicit selector list for every event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultTargets {
    AutoSingleStore,
    Explicit(Vec<StoreSelector>),
}

/// Paths to pre-built artifacts; when absent the simulator trains its
/// own desk-scale models from the seed.
#[derive(Debug, Clone, Default)]
pub struct ModelSource {
    pub base_model: Option<PathBuf>,
    pub redundant_models: Vec<PathBuf>,
    pub guard_file: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub classes: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub n_frames: usize,
    pub frame_period_us: u64,
    /// None derives the default: the TMR worst case including a full
    /// inline repair (2·c_dt + c_in + layers·c_rec_layer).
    pub deadline_us: Option<u64>,
    pub a_threshold: f64,
    pub n_fault_events: usize,
    pub fault_frames: Option<Vec<usize>>,
    pub fault_ber: f64,
    pub fault_mode: InjectionMode,
    pub fault_targets: FaultTargets,
    pub include_metadata: bool,
    pub c_dt_us: u64,
    pub c_in_us: u64,
    pub c_rec_layer_us: u64,
    pub disk_latency_us: u64,
    pub margin: f64,
    pub measure_accuracy: bool,
    pub layer_sizes: Vec<usize>,
    pub eft_hidden: Vec<usize>,
    pub train_epochs: usize,
    pub train_lr: f32,
    pub train_batch: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub data_spread: f32,
    pub source: ModelSource,
    /// Scratch space for strategies that persist state (CBR disk copy).
    pub workdir: PathBuf,
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            strategy: StrategyKind::Naper,
            seed: 7,
            n_frames: 50,
            frame_period_us: 250_000,
            deadline_us: None,
            a_threshold: 0.5,
            n_fault_events: 5,
            fault_frames: None,
            fault_ber: HIGH_FAULT_RATE,
            fault_mode: InjectionMode::FixedCount,
            fault_targets: FaultTargets::AutoSingleStore,
            include_metadata: false,
            c_dt_us: 80_000,
            c_in_us: 20_000,
            c_rec_layer_us: 2_000,
            disk_latency_us: 100_000,
            margin: 1.0,
            measure_accuracy: false,
            layer_sizes: vec![16, 32, 32, 32, 10],
            eft_hidden: vec![16, 32, 64],
            train_epochs: 12,
            train_lr: 0.1,
            train_batch: 32,
            train_samples: 2000,
            val_samples: 1000,
            data_spread: 1.5,
            source: ModelSource::default(),
            workdir: PathBuf::from("."),
        }
    }
}

impl SimConfig {
    /// Default deadline for a given layer count: the TMR worst case with
    /// every layer repaired inline.
    pub fn derived_deadline_us(&self, layers: usize) -> u64 {
        self.deadline_us
            .unwrap_or(2 * self.c_dt_us + self.c_in_us + layers as u64 * self.c_rec_layer_us)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be positive".into()));
        }
        if self.frame_period_us == 0 {
            return Err(Error::Config("frame_period_ms must be positive".into()));
        }
        if let Some(d) = self.deadline_us {
            if d == 0 {
                return Err(Error::Config("deadline_ms must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.a_threshold) {
            return Err(Error::Config("a_threshold must be in [0,1]".into()));
        }
        if let Some(frames) = &self.fault_frames {
            if let Some(&bad) = frames.iter().find(|&&f| f >= self.n_frames) {
                return Err(Error::Config(format!(
                    "fault frame {bad} beyond n_frames {}",
                    self.n_frames
                )));
            }
        } else if self.n_fault_events > self.n_frames {
            return Err(Error::Config(format!(
                "n_fault_events {} exceeds n_frames {}",
                self.n_fault_events, self.n_frames
            )));
        }
        if self.c_dt_us == 0 || self.c_in_us == 0 || self.c_rec_layer_us == 0 {
            return Err(Error::Config("cost table entries must be positive".into()));
        }
        if self.margin < 1.0 {
            return Err(Error::Config(format!("margin {} below 1.0", self.margin)));
        }
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config("layer_sizes needs input and output".into()));
        }
        if self.eft_hidden.len() < 2 {
            return Err(Error::Config("eft_hidden needs at least two widths".into()));
        }
        if self.train_samples < 2 || self.val_samples < 1 {
            return Err(Error::Config("train/val sample counts too small".into()));
        }
        Ok(())
    }

    /// Parse a flat key=value file; '#' starts a comment. Every key is
    /// validated; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("expected key=value, got '{line}'")));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn bad(key: &str, value: &str) -> Error {
            Error::Config(format!("bad value '{value}' for key '{key}'"))
        }
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|_| bad(key, value))?
            };
        }
        match key {
            "strategy" => self.strategy = value.parse()?,
            "seed" => self.seed = parse!(u64),
            "n_frames" => self.n_frames = parse!(usize),
            "frame_period_ms" => self.frame_period_us = ms_to_us(parse!(f64)),
            "deadline_ms" => self.deadline_us = Some(ms_to_us(parse!(f64))),
            "a_threshold" => self.a_threshold = parse!(f64),
            "n_fault_events" => self.n_fault_events = parse!(usize),
            "fault_frames" => {
                let frames: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|v| v.trim().parse::<usize>()).collect();
                self.fault_frames = Some(frames.map_err(|_| bad(key, value))?);
            }
            "fault_ber" => self.fault_ber = parse!(f64),
            "fault_rate" => {
                self.fault_ber = match value {
                    "low" => LOW_FAULT_RATE,
                    "high" => HIGH_FAULT_RATE,
                    _ => return Err(bad(key, value)),
                }
            }
            "fault_mode" => self.fault_mode = value.parse()?,
            "fault_targets" => {
                self.fault_targets = if value == "auto" {
                    FaultTargets::AutoSingleStore
                } else {
                    let sels: Result<Vec<StoreSelector>> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    FaultTargets::Explicit(sels?)
                }
            }
            "include_metadata" => self.include_metadata = parse!(bool),
            "c_dt_ms" => self.c_dt_us = ms_to_us(parse!(f64)),
            "c_in_ms" => self.c_in_us = ms_to_us(parse!(f64)),
            "c_rec_layer_ms" => self.c_rec_layer_us = ms_to_us(parse!(f64)),
            "disk_latency_ms" => self.disk_latency_us = ms_to_us(parse!(f64)),
            "margin" => self.margin = parse!(f64),
            "measure_accuracy" => self.measure_accuracy = parse!(bool),
            "layer_sizes" => {
                let sizes: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|v| v.trim().parse::<usize>()).collect();
                self.layer_sizes = sizes.map_err(|_| bad(key, value))?;
            }
            "eft_hidden" => {
                let sizes: std::result::Result<Vec<usize>, _> =
                    value.split(',').map(|v| v.trim().parse::<usize>()).collect();
                self.eft_hidden = sizes.map_err(|_| bad(key, value))?;
            }
            "train_epochs" => self.train_epochs = parse!(usize),
            "train_lr" => self.train_lr = parse!(f32),
            "train_batch" => self.train_batch = parse!(usize),
            "train_samples" => self.train_samples = parse!(usize),
            "val_samples" => self.val_samples = parse!(usize),
            "data_spread" => self.data_spread = parse!(f32),
            "base_model" => self.source.base_model = Some(PathBuf::from(value)),
            "redundant_models" => {
                self.source.redundant_models =
                    value.split(',').map(|v| PathBuf::from(v.trim())).collect()
            }
            "guard_file" => self.source.guard_file = Some(PathBuf::from(value)),
            "dataset" => self.source.dataset = Some(PathBuf::from(value)),
            "classes" => self.source.classes = Some(parse!(usize)),
            "workdir" => self.workdir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}
