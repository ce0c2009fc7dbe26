//! Fault-tolerant inference for dense networks protected by ensemble
//! redundancy: per-layer relation parameters detect memory bit flips in a
//! single comparison pass, checksums attribute the faulted store, and
//! corrupted layers are rebuilt algebraically while healthy models keep
//! serving. TMR, DRO, CBR and EFT baselines sit behind the same strategy
//! interface, and a virtual-time simulator replays frame arrivals, fault
//! events, and deadline-aware chunked recovery.

pub mod data;
pub mod guard;
pub mod inject;
pub mod io;
pub mod model;
pub mod nn;
pub(crate) mod par;
pub mod sim;
pub mod strategy;
pub mod tensor;

pub use data::Dataset;
pub use guard::{FaultReport, GuardedEnsemble, LayerVerdict, OutputMode, VerdictKind};
pub use inject::{BitLocation, FaultEvent, InjectionConfig, InjectionMode, StoreId, StoreSelector};
pub use model::{LayerParams, ModelParams, NetworkSpec};
pub use strategy::{MemoryReport, ProtectionStrategy, RecoveryProgress, StepOutcome};
pub use tensor::{Checksum, Tensor};

/// Errors surfaced by the library. Usage and format problems are kept
/// distinct from runtime faults so callers can map them to exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("unrecoverable fault in layer {layer}: {msg}")]
    Unrecoverable { layer: usize, msg: String },
    #[error("profiling error: {0}")]
    Profiling(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input (configs, formats, contracts)
    /// rather than faults encountered while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch(_)
                | Error::OutOfRange(_)
                | Error::Contract(_)
                | Error::Format { .. }
                | Error::Config(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Whether the crate was built with the rayon-backed parallel paths.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
