//! Thermofield chain-mapping simulator for open quantum systems coupled to
//! finite-temperature bosonic or fermionic reservoirs.

pub mod chainmap;
pub mod cli;
pub mod config;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod mastereq;
pub mod operators;
pub mod pipeline;
pub mod quad;
pub mod reference;
pub mod series;
pub mod spectral;
pub mod tensornet;

pub use error::{Error, Result};
