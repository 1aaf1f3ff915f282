//! Simulation and statistical verification of radial/angular (skew-product)
//! decompositions for Markov processes invariant under a compact group.

pub mod coset;
pub mod decompose;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod group;
pub mod jumps;
pub mod levy;
pub mod linalg;
pub mod path;
pub mod rng;
pub mod scenarios;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
