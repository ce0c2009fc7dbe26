//! `naper` — batch front-end for the fault-protected inference engine:
//! train desk-scale models, build and persist guards, inject bit flips,
//! detect and recover, replay real-time scenarios, benchmark the
//! strategies, and aggregate reports. Every subcommand is deterministic
//! given its config and seeds.

mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "naper",
    version,
    about = "Ensemble-redundancy fault protection: inference engine and real-time fault simulator"
)]
pub struct Cli {
    /// Directory all outputs are written under.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Override the seed used by the subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file (key=value) for subcommands that take one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train one model per seed on a CSV dataset and write NAPM files.
    Train {
        /// Architecture as sizes: input,hidden...,classes.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
        /// Dataset CSV (label,f0,f1,...).
        #[arg(long)]
        data: PathBuf,
        /// Declared class count; inferred from labels when absent.
        #[arg(long)]
        classes: Option<usize>,
        /// One model is trained per seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f32,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// Output file prefix: <prefix>-s<seed>.napm.
        #[arg(long, default_value = "model")]
        prefix: String,
    },
    /// Generate a seeded Gaussian-blob dataset as CSV.
    GenData {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 3000)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 1.5)]
        spread: f32,
        #[arg(long, default_value = "blobs.csv")]
        name: String,
    },
    /// Build relation tensors and checksums, writing a NAPG guard file.
    BuildGuard {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_delimiter = ',')]
        redundants: Vec<PathBuf>,
        #[arg(long, default_value = "guard.napg")]
        name: String,
    },
    /// Plant seeded bit flips into model/guard stores.
    Inject {
        /// Single unguarded model to corrupt.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Guarded set: base model file.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        redundants: Vec<PathBuf>,
        #[arg(long)]
        guard: Option<PathBuf>,
        /// Bit error rate; overridden by --preset.
        #[arg(long)]
        ber: Option<f64>,
        /// Named rate: low (1e-7) or high (1e-5).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "fixed")]
        mode: String,
        #[arg(long, value_delimiter = ',', default_value = "all")]
        targets: Vec<String>,
        /// Also expose checksum words to injection.
        #[arg(long, default_value_t = false)]
        include_metadata: bool,
        /// JSON-lines fault log filename.
        #[arg(long, default_value = "faults.jsonl")]
        log: String,
        /// Output filename prefix for the mutated copies.
        #[arg(long, default_value = "injected")]
        prefix: String,
    },
    /// Run two-step detection (and optionally a full checksum audit)
    /// over a guarded set, printing per-layer verdicts.
    Detect {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_delimiter = ',')]
        redundants: Vec<PathBuf>,
        #[arg(long)]
        guard: PathBuf,
        /// Run the checksum audit instead of relation-only detection.
        #[arg(long, default_value_t = false)]
        audit: bool,
    },
    /// Audit a guarded set and rebuild faulted layers within a budget.
    Recover {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_delimiter = ',')]
        redundants: Vec<PathBuf>,
        #[arg(long)]
        guard: PathBuf,
        /// Maximum faulted layers repaired per model.
        #[arg(long, default_value_t = usize::MAX)]
        budget: usize,
        /// Which model to recover: all, base, or r<m>.
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value = "recovered")]
        prefix: String,
    },
    /// Replay a frame-by-frame scenario from a config file, writing
    /// trace.jsonl and summary.csv.
    Simulate {
        /// Config file; falls back to the global --config.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Wall-clock detection+inference per strategy with counter columns,
    /// normalized to the TMR median.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "naper,tmr,dro,cbr,eft,unprotected")]
        strategies: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "128,256,256,10")]
        layers: Vec<usize>,
        #[arg(long, default_value_t = 15)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value = "bench.csv")]
        name: String,
    },
    /// Aggregate memory accounting, simulation summaries, and bench
    /// results into markdown + CSV tables.
    Report {
        /// Model file the memory table is computed over.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        bench: Option<PathBuf>,
        /// Hidden widths for the fixed-ensemble memory row.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        eft_hidden: Vec<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = commands::dispatch(cli) {
        eprintln!("error: {err:#}");
        let usage = err
            .downcast_ref::<naper_core::Error>()
            .map(naper_core::Error::is_usage)
            .unwrap_or(false);
        std::process::exit(if usage { 2 } else { 1 });
    }
}
