//! Library side of the `pvs` command: run configuration, the
//! setting x algorithm x scheme experiment matrix, reference baselines,
//! and result rendering. The binary is a thin clap wrapper over these.

pub mod baseline;
pub mod config;
pub mod experiment;
pub mod report;
