//! Sweep orchestration: configuration, per-cell seed derivation, parallel
//! execution over paired replicates, and report emission.

pub mod config;
pub mod emit;
pub mod runner;
pub mod seeds;

pub use config::{SweepConfig, ValuesOptions};
pub use emit::{
    read_manifest, read_reports, write_aggregate, write_datasets, write_outputs,
    write_reports_csv, Manifest, ManifestCell,
};
pub use runner::{run_cell, run_sweep, FailureRecord, SweepOutput, TraceRecord};
pub use seeds::derive_cell_seed;
