//! Analysis and simulation of the mixed feedback amplifier.
//!
//! The amplifier is a Lure system: a first-order load driven through a
//! sigmoidal saturation by the difference of a fast positive and a slow
//! negative first-order feedback channel. This crate certifies 0- and
//! 2-dominance (and 2-passivity) of that loop with the shifted circle
//! criterion, enumerates and classifies its equilibria, builds (gain, balance)
//! regime maps, integrates trajectories and detects oscillations. The same
//! machinery is extended to parallel channel banks and to a passive
//! mass-spring-damper load.
//!
//! Module map:
//!
//! - [`tf_core`]: polynomials, rational transfer functions, the amplifier model.
//! - [`freq_analysis`]: shifted Nyquist sweeps, critical gains and balances,
//!   dominance certificates.
//! - [`equilibria`]: equilibrium search, linearization, regime maps.
//! - [`sim`]: state-space realizations, RK4 integration, oscillation detection.
//! - [`multichannel`]: parallel banks and pole/zero interlacing.
//! - [`interconnect`]: passive loads and certificate composition.
//! - [`report`]: aggregated analysis reports and CSV writers used by the CLI.

pub mod equilibria;
pub mod error;
pub mod freq_analysis;
pub mod interconnect;
pub mod multichannel;
pub mod report;
pub mod sim;
pub mod tf_core;

pub use error::{Error, Result};

pub use num_complex::Complex64;
