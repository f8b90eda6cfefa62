//! Simulation and analysis toolkit for optically detected nuclear magnetic
//! resonance (ODNMR) on Eu-151 nuclear spins in a molecular crystal.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the level scheme and the inhomogeneous ion ensemble.
//! * [`sequence`] is the pulse-sequence language and the protocol builders.
//! * [`dynamics`] propagates the ensemble through a sequence (optical pumping,
//!   exact RF rotations, Ornstein-Uhlenbeck dephasing, T1 relaxation).
//! * [`analysis`] contains the Levenberg-Marquardt fitter and the estimators.
//! * [`experiments`] composes the above into reproducible sweep runs.
//! * [`config`] reads run configurations from TOML or JSON.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod seed;
pub mod sequence;
pub mod units;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
