//! Stagewise safe Bayesian optimization over finite, discretized domains.
//!
//! The crate is `no_std` (with `alloc`). It contains the numerical machinery:
//! Gaussian-process posteriors, running-intersection confidence intervals,
//! safe-set and expander computation, point-selection rules, the StageOpt,
//! SafeOpt, constrained-EI and dueling-feedback run drivers, a brute-force
//! reachability oracle, information-gain estimation and the synthetic
//! problem generator. File formats, the CLI and benchmark orchestration live
//! in the `stageopt-harness` crate.
//!
//! Everything operates on grid indices: a [`domain::GridDomain`] fixes the
//! finite decision set, and per-point quantities are plain slices indexed by
//! point.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod acquisition;
pub mod algorithms;
pub mod confidence;
pub mod domain;
pub mod error;
pub mod gp;
pub mod info_gain;
pub mod kernel;
pub mod linalg;
pub mod preference;
pub mod reachability;
pub mod safe_set;
pub mod special;
pub mod synthetic;

pub(crate) mod math;

pub use error::{Error, Result};

/// Deterministic generator used for every random draw in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
