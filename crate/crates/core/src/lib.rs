//! Bargaining failure from normative disagreement, at desk scale.
//!
//! This crate carries the pure algorithmic part of the toolkit and builds on
//! `core` + `alloc` only:
//!
//! - [`game`]: iterated matrix games and the Coin Game gridworlds, rollouts,
//!   and the coordination / bargaining-problem classifier.
//! - [`welfare`]: welfare functions, feasible sets, Pareto fronts, welfare
//!   optima and the normalized cooperation score.
//! - [`lola`]: LOLA with exact discounted values on memory-1 policies.
//! - [`planning`]: welfare-optimal joint policies, tabular Q-learning best
//!   responses and pure minimax values.
//! - [`amtft`]: amTFT(w) agents and their norm-adaptive amTFT(W) extension.
//! - [`exploitability`]: grim welfare policies and the cross-play minimax
//!   bound verifier.
//! - [`evaluation`]: self-play / cross-play match records and aggregation.
//!
//! File formats, configuration and the command line live in the companion
//! `normbargain` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod amtft;
pub mod error;
pub mod evaluation;
pub mod exploitability;
pub mod game;
pub mod lola;
mod math;
pub mod planning;
pub mod welfare;

pub use error::{Error, Result};

/// Seeded random source used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate's random source from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Discount factor used by every bundled environment and algorithm.
pub const DEFAULT_GAMMA: f64 = 0.96;
