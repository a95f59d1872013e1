//! Desk-scale study of how Monte Carlo tally uncertainty in training data
//! propagates through neural-network surrogates into multi-objective design
//! optimization.
//!
//! The crate provides two synthetic design benchmarks (a neutron moderator and
//! an ion-to-neutron converter), an emulator that turns their exact objective
//! values into noisy tallies at a prescribed relative error, a from-scratch
//! feedforward regressor with grid-search tuning, an NSGA-III optimizer, 2D
//! hypervolume metrics, and a verification pipeline that scores the recovered
//! Pareto fronts by normalized hypervolume loss per uncertainty level.

pub mod config;
pub mod dataset;
pub mod emulator;
pub mod error;
pub mod hashing;
pub mod nn;
pub mod nsga3;
pub mod pareto;
pub mod pipeline;
pub mod problems;
pub mod seed;
pub mod verification;

pub use error::{Error, Result};
