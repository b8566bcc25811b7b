//! Measurement synthesis: day profiles, per-frame simulation, corruption,
//! and labeled dataset assembly.
//!
//! A frame is one minute of feeder telemetry: per-load-bus meters, the PV
//! plants' self-reported outputs, and the substation interchange meter.
//! Load meters always report the true (constant-PQ) demand. PV readings
//! are whatever the plants claim, which under attack is the spoofed
//! legitimate-control counterfactual; the substation meter is the one
//! honest channel that reflects the attacked feeder state.

pub mod dataset;
pub mod frame;
pub mod profiles;
pub mod rng;

use thiserror::Error;

use crate::attack::AttackError;
use crate::der_control::DerError;
use crate::grid::GridError;

pub use dataset::{
    attack_frame_mask, build_dataset, derive_missing_variant, missing_frame_mask, read_features,
    read_snapshots, write_dataset, Dataset, DatasetConfig, DatasetSummary, FORMAT_VERSION,
};
pub use frame::{
    apparent_loss, apply_meter_error, extract_features, quantize_readings, simulate_frame,
    FeatureVector, FrameReadings, SimFrame, FEATURE_NAMES, METER_ERROR_FRAC, READING_SCALE,
};
pub use profiles::{
    read_profiles, sample_customer_mix, synth_day, write_profiles, CustomerMix, DayProfiles,
    LOAD_POWER_FACTOR, MAX_TOTAL_LOAD_P_KW, MAX_TOTAL_LOAD_Q_KVAR, MINUTES_PER_DAY,
};
pub use rng::derive_rng;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("{dropped} of {planned} frames failed to converge, above the {limit} limit")]
    TooManyDropped {
        dropped: usize,
        planned: usize,
        limit: usize,
    },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("malformed file {path}: {msg}")]
    BadFile { path: String, msg: String },
}
