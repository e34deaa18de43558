//! Batch experiment driver for the Gauss-Newton data-assimilation toolkit:
//! seeded ensembles, parameter sweeps, and CSV/JSON emission.

pub mod config;
pub mod emit;
pub mod ensemble;
