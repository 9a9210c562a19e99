//! Radar-network gait analysis.
//!
//! The crate covers the whole chain from a kinematic walker to validated gait
//! parameters:
//!
//! * [`sim`] renders LFMCW IQ chirp cubes for any number of radar nodes from a
//!   point-scatterer walker with known gait events.
//! * [`dsp`] turns one node's cube into a clutter-filtered range-time matrix and
//!   a Doppler-time spectrogram.
//! * [`fusion`] splices the Doppler-time matrices of two facing nodes frame by
//!   frame, keeping whichever has the better SNR.
//! * [`events`] segments walking bouts and finds heel strikes and toe offs from
//!   either the feet or the torso Doppler signature.
//! * [`params`] derives the ten spatiotemporal gait parameters per gait cycle.
//! * [`stats`] holds the agreement statistics used for validation.
//! * [`pipeline`] wires the above together for the six node configurations.

pub mod dsp;
pub mod events;
pub mod fusion;
pub mod params;
pub mod pipeline;
pub mod series;
pub mod sim;
pub mod stats;

mod error;

pub use error::{Error, Result};
pub use num_complex::{Complex32, Complex64};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
