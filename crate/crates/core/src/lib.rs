//! UAV sensing with a single FMCW millimetre-wave radar.
//!
//! The crate covers the whole processing chain for detecting small drones by
//! the periodic micro-motion (PMM) of their rotor blades:
//!
//! ```text
//! frames ─► Range-FFT ─► Doppler-FFT ─► spectrum folding ─► R-PMM diagram
//!        ─► spectral subtraction ─► constrained DP path ─► particle filter
//!        ─► Doppler-Time diagram ─► DC removal / alignment ─► LSTM detector
//! ```
//!
//! [`echo`] synthesises beat-signal frames for rotor-carrying targets and
//! non-UAV distractors so every stage can be exercised against a known
//! ground truth.

pub mod config;
pub mod dataset;
pub mod echo;
pub mod error;
pub mod identifier;
pub mod io;
pub mod pipeline;
pub mod pmm;
pub mod rd;
pub mod seed;
pub mod tracker;

pub use config::{DerivedParams, RadarConfig, TrajectorySpec, UavConfig};
pub use error::{Error, Result};
