//! Simulation of a cascaded acousto-optic deflector + metasurface scanning
//! LiDAR: beam-steering optics, calibration, scan generation, scene ray
//! casting, detector waveform synthesis, time-of-flight reconstruction and
//! velocimetry analysis.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod angles;
pub mod calibration;
pub mod config;
pub mod error;
pub mod harness;
pub mod optics;
pub mod pipeline;
pub mod scanpattern;
pub mod scene;
pub mod signal;
pub mod verify;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Unambiguous range `c / (2 f_rep)` (m).
pub fn max_range(f_rep: f64) -> f64 {
    SPEED_OF_LIGHT / (2.0 * f_rep)
}
