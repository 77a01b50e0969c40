//! The known-truth generator: a structural model over contexts, latent user
//! state, logged agent choices, simulator mediators, and outcomes.
//!
//! Everything downstream — estimator fits, value estimates, regret scores —
//! treats this module as the world. Because the world is fully known, exact
//! conditional rewards and per-agent true values are available as oracles
//! with controllable Monte Carlo error.

pub mod context;
pub mod discrete;
pub mod generate;
pub mod mediator;
pub mod outcome;
pub mod params;
pub mod router;
pub mod truth;

pub use context::{sample_context, sketch_tokens, Context};
pub use discrete::{DiscreteRow, DiscreteScm, PlugIn};
pub use generate::{
    complete_row, featurize_mediator, generate_cell, hidden_features, sample_context_pool,
    sample_exp_row_at, sample_exp_rows, sample_latent, sample_obs_row_at, sample_obs_rows,
    CellData, MediatorFeatures, ScmSample, Source, StreamSeeds, EVAL_ID_BASE, EXP_ID_BASE,
    OBS_ID_BASE, REF_ID_BASE,
};
pub use mediator::sample_mediator;
pub use outcome::{
    aux_labels, claim_count, coding_scores, coding_utility, observed_outcome, rubric_scores,
    scalar_outcome, scalar_outcome_from_noise, scalar_true_reward, sharp_reward, sharpen_weights,
    smooth_reward, true_reward, ModeClass, RewardMode,
};
pub use params::{GeneratorConfig, GeneratorParams};
pub use router::{
    context_logits, latent_shortlist, mixture_probs, route_mixture, route_softmax,
    sample_categorical, softmax, softmax_probs, RouterKind,
};
pub use truth::{true_q, truth_tables, TruthTable};
