//! One-class fall detection from wearable inertial data.
//!
//! Autoencoders are trained on normal activity only; a window is a fall when
//! its reconstruction error exceeds a threshold fitted on training errors.
//! Detectors are monolithic (all six channels concatenated) or channel-wise
//! ensembles combined by majority vote, and thresholds are tuned on normal
//! outliers that stand in for the unseen falls.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod report;
pub mod selection;
pub mod synth;
pub mod threshold;

pub use error::{Error, Result};
