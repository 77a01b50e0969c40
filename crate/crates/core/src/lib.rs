//! cebench: a desk-scale workbench for studying offline evaluation of
//! generative-model routing when the logged data are confounded.
//!
//! The library simulates a three-source data regime — a large confounded
//! observational log (OBS), a small randomized experiment (EXP), and replayable
//! simulator outputs (SIM) — and compares reward-model families that consume
//! those sources in different ways. On top of the simulator it provides
//! direct-method and doubly-robust value estimates, regret/RMSE scoring
//! against ground truth, and a set of closed-form risk identities that act as
//! numerical oracles for the estimator implementations.
//!
//! Modules, roughly bottom-up:
//!
//! * [`numerics`] — hashed sparse features, weighted ridge solves, truncated
//!   PCA, Gauss–Hermite expectations.
//! * [`scm`] — the structural causal model behind the synthetic benchmark:
//!   contexts, latent user state, routing policies, mediator sampling, reward
//!   maps, and exact ground-truth computation.
//! * [`estimators`] — the reward-model families (EXP-only, OBS-only,
//!   proxy-EXP, grounded corrections, pooled and residual-pooled fits).
//! * [`tuning`] — agent-level cross-validation and holdout selection with
//!   deterministic tie-breaking.
//! * [`values`] — direct-method and doubly-robust per-agent value estimates.
//! * [`metrics`] — recommendation regret, RMSE grids, and cross-cell
//!   aggregation (ranks, winner maps).
//! * [`theory`] — executable forms of the risk identities used to audit the
//!   estimators.
//! * [`harness`] — cell/sweep configuration, seed derivation, parallel
//!   execution, and CSV/JSON emission.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod scm;
pub mod theory;
pub mod tuning;
pub mod values;

pub use error::{Error, Result};
