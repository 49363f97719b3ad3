//! A desk-scale laboratory for latent MDPs with prospective side information.
//!
//! The environment model is a finite mixture of MDPs: a hidden context `m` is
//! drawn once per episode, together with a weakly revealing side-information
//! symbol `iota` shown to the agent before the first step. The crate provides
//! exact simulation and planning for such environments, a predictive-state
//! reparameterization with numeric well-conditioning certificates, optimistic
//! maximum-likelihood learners (regret minimization and pure exploration), a
//! generator for an adversarial instance family with exact KL oracles, and a
//! seeded experiment harness with CSV output.

pub mod env;
pub mod error;
pub mod hardgen;
pub mod harness;
pub mod learning;
pub mod planning;
pub mod psr;

pub use env::{LmdpPsi, ModelClass, TrajectoryRecord};
pub use error::Error;

/// Absolute tolerance used by exact-enumeration comparisons.
pub const ENUM_TOL: f64 = 1e-10;

/// Default ceiling on enumeration-tree nodes for planners and evaluators.
pub const DEFAULT_PLANNER_BUDGET: u64 = 1_000_000;
