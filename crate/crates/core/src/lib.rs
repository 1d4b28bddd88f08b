//! Simulation and planning toolkit for single-site microwave addressing of
//! neutral atoms in a 1D optical lattice under a magnetic field gradient.
//!
//! The crate models the full experimental chain: the quadrupole field
//! geometry and Zeeman-shifted transition frequency ([`physics`]), microwave
//! pulse transfer spectra with a Bloch-equation oracle ([`pulse`]),
//! pattern-to-pulse-train planning and yield estimation ([`planner`]), a
//! seeded Monte Carlo of loading, addressing, push-out and lattice drift
//! ([`sim`]), synthetic fluorescence imaging and position estimation
//! ([`imaging`]), and the spectral/statistical analysis layer ([`analysis`]).

pub mod analysis;
pub mod config;
pub mod error;
pub mod fit;
pub mod imaging;
pub mod io;
pub mod ode;
pub mod physics;
pub mod planner;
pub mod pulse;
pub mod quad;
pub mod sim;

pub use config::{ApparatusConfig, GammaMode, Position};
pub use error::{Error, Result};
