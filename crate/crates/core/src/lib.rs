//! Mean-field theory and infrared bounds for Potts and Blume-Capel models
//! with reflection-positive long-range interactions.
//!
//! The crate is organized bottom-up:
//!
//! * [`couplings`] defines and normalizes the interactions, their Fourier
//!   transforms and torus versions.
//! * [`infrared`] evaluates the infrared integral that controls how close
//!   the true model is to its mean-field approximation.
//! * [`mf_core`] is a generic mean-field engine for any finite spin space.
//! * [`mf_potts`] and [`mf_blume_capel`] are the exact analyses of the two
//!   concrete models.
//! * [`torus_mc`] is a heat-bath Monte Carlo on the torus used to check the
//!   bounds numerically.
//! * [`cli`] wires everything to the `longrange-mf` binary.

pub mod cli;
pub mod couplings;
pub mod error;
pub mod infrared;
pub mod mf_blume_capel;
pub mod mf_core;
pub mod mf_potts;
pub mod numerics;
pub mod torus_mc;

pub use error::{Error, Result};
