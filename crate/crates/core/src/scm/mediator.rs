//! Simulator channel: agent responses as token multisets.
//!
//! A response keeps each context token independently with the agent's keep
//! rate, appends the agent's fixed style tokens, and adds fresh noise tokens.
//! The channel sees only (context tokens, agent) — never the latent state —
//! which is what makes simulator draws exchangeable between data generation
//! and evaluation-time reuse.
//!
//! Stream discipline: one uniform per context token for the keep decision,
//! then one 64-bit draw per noise slot (reduced modulo the noise vocabulary;
//! the modulo bias is below 2^-50 for the defaults and keeps the draw count
//! fixed).

use rand::Rng;

use crate::scm::params::GeneratorParams;

pub fn sample_mediator<R: Rng>(params: &GeneratorParams, context_tokens: &[u32], agent: usize, rng: &mut R) -> Vec<u32> {
    let c = &params.config;
    let keep = params.keep_rates[agent];
    let mut out = Vec::with_capacity(context_tokens.len() + c.style_tokens_per_agent + c.noise_tokens_per_draw);
    for &t in context_tokens {
        let coin: f64 = rng.random();
        if coin < keep {
            out.push(t);
        }
    }
    for j in 0..c.style_tokens_per_agent {
        out.push(params.style_token(agent, j));
    }
    for _ in 0..c.noise_tokens_per_draw {
        let id = (rng.random::<u64>() % c.noise_vocab as u64) as u32;
        out.push(params.noise_token(id));
    }
    out
}
