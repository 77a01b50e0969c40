//! Reward-estimator families.
//!
//! Every family produces a [`RewardModel`] whose prediction is a clipped
//! scalar reward on a densified mediator representation. They differ in which
//! data sources they consume and how:
//!
//! * **EXP-Only** — ridge on the small randomized sample alone.
//! * **OBS-Only** — ridge on the large confounded log alone.
//! * **Proxy-EXP** — ridge on an OBS-derived low-dimensional proxy `ψ`, fit
//!   with EXP labels.
//! * **Grounded** (linear / rich / anchored) — OBS baseline `f_OBS` plus an
//!   EXP-fitted correction in proxy space, optionally recalibrated with a
//!   weak anchored pooling step.
//! * **Pooled** (`CVCI`) and **residual-pooled** (`CVCI_RES`) — a single
//!   weighted regression over both sources, in raw feature space or on
//!   residuals around `f_OBS`.
//!
//! [`proxy`] learns the `ψ` map from OBS auxiliary labels; [`model`] holds
//! the shared prediction container; [`linear`] implements the
//! single-regression families; [`grounded`] the baseline-plus-correction
//! ones; [`tuned`] wires the families to the hyperparameter-selection rules
//! they use in the benchmark.

pub mod grounded;
pub mod linear;
pub mod model;
pub mod proxy;
pub mod tuned;

pub use grounded::{
    cross_fit_baseline_predictions, fit_grounded_anchor_at, fit_grounded_linear_at,
    fit_grounded_rich_at, fit_obs_baseline,
};
pub use linear::{fit_cvci, fit_cvci_residual, fit_exp_only, fit_obs_only, fit_proxy_exp};
pub use model::{BasisKind, Family, RewardModel};
pub use proxy::{compress_psi, learn_proxy, ProxyMap};
pub use tuned::{fit_at, fit_family_tuned, ChosenParams, FitContext, FitOptions, TunedFit};
