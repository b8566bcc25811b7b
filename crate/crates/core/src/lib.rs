//! Simulation and intrusion-detection toolkit for PV-rich radial
//! distribution feeders.
//!
//! The crate models a 69-bus medium-voltage feeder with four PV plants,
//! solves its power flow with a backward/forward sweep, synthesizes
//! minute-resolution telemetry under normal and tampered inverter control,
//! and trains classifiers that detect the tampering from substation-level
//! aggregate features alone.

pub mod attack;
pub mod der_control;
pub mod grid;
pub mod ids;
pub mod powerflow;
pub mod telemetry;
