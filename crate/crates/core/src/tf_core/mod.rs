//! Polynomial and rational transfer-function arithmetic, and the amplifier
//! model built on top of it.

mod amplifier;
mod poly;
mod rational;

pub use amplifier::{critical_balance, AmplifierParams, Nonlinearity, ZeroLocation};
pub(crate) use amplifier::validate_taus;
pub use poly::{eigenvalues, poly_roots, Polynomial, DEFAULT_ROOT_TOL, MAX_ROOT_DEGREE};
pub use rational::{RationalTF, POLE_PROXIMITY_TOL};
