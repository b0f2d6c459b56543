//! Population-based neural combinatorial optimization for Max-Cut and
//! Maximum Independent Set.

pub mod baselines;
pub mod bits;
pub mod config;
pub mod cli;
pub mod cnc;
pub mod cni;
pub mod error;
pub mod experiments;
pub mod gnn;
pub mod graphs;
pub mod memory;
pub mod pbnco;
pub mod problems;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
