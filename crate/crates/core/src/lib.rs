//! Laboratory for training one memory-based policy across many robot
//! morphologies whose identity is hidden from the policy.
//!
//! - [`env`]: the GaitChain morphology family compiled to tabular MDPs.
//! - [`pomdp`]: the latent-morphology composite POMDP and its exact solvers.
//! - [`policy`]: recurrent, modular and memory-free policies with BPTT.
//! - [`train`]: sequential on-policy training, staleness probes, benchmarks.
//! - [`decpomdp`]: decentralized formulation, brute-force search, independent learners.

pub mod decpomdp;
pub mod env;
pub mod error;
pub mod policy;
pub mod pomdp;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{HeatError, Result};
