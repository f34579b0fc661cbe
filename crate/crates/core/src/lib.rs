//! Spectral solver for the Gross-Pitaevskii equation with rough, time-dependent potentials.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod ground_state;
pub mod potential;
pub mod propagator;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
