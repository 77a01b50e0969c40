//! Per-cell seed derivation for the fitting stage.
//!
//! Generation streams (logs, randomized rounds, evaluation pools, truth
//! tables, value draws) are keyed at the replicate level so that one
//! replicate shares its data across the whole grid — that pairing is what
//! makes cell-to-cell comparisons low-variance. Everything *downstream* of
//! the data (hyperparameter selection splits, cross-fitting folds, any
//! tie-breaking randomness inside a fit) instead gets a seed keyed to the
//! full cell coordinate, so rerunning a single cell from the manifest
//! reproduces the sweep's bytes exactly without replaying neighbors.

use crate::metrics::CellKey;
use crate::numerics::{hash_bytes, mix_fields};

/// Domain tag separating cell seeds from every generation stream.
const CELL_SEED_TAG: u64 = 0xCE11_0000_0000_0007;

/// Seed for all fit-stage randomness in one (cell, replicate) pair.
pub fn derive_cell_seed(master_seed: u64, key: &CellKey, replicate: u64) -> u64 {
    mix_fields(&[
        master_seed,
        CELL_SEED_TAG,
        key.beta.to_bits(),
        key.n_obs as u64,
        key.n_exp as u64,
        hash_bytes(key.mode.as_bytes(), CELL_SEED_TAG),
        replicate,
    ])
}
