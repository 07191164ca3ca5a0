//! Renormalised FitzHugh-Nagumo SPDE on the torus: kernel decomposition,
//! renormalisation constants, stochastic objects and a spectral solver.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod io;
pub mod kernel;
pub mod noise;
pub mod objects;
pub mod quadrature;
pub mod renorm;
pub mod rng;
pub mod scaling;
pub mod solver;

pub use error::{Error, Result};
