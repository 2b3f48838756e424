//! Exploratory mean-variance asset-liability management in a two-regime
//! switching market: simulation, filtering, closed-form policies, policy
//! improvement and actor-critic learners.

pub mod cli;
pub mod closed_form;
pub mod data_ingest;
pub mod empirical;
pub mod error;
pub mod eval;
pub mod filter;
pub mod improvement;
pub mod market;
pub mod policy;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
