//! Automatic volume control driven by the preferred speech interference
//! level (PSIL) of the ambient noise.
//!
//! The processing chain runs once per block of `N` samples:
//!
//! 1. [`isolation`] removes the device's own output from the microphone feed.
//! 2. [`spectrum`] takes a radix-2 FFT of the remaining noise.
//! 3. [`meter`] sums the 500/1000/2000 Hz octave bands and averages their levels.
//! 4. [`solver`] pushes that level through a damped-oscillator model to get a gain.
//! 5. [`prefs`] learns the listener's preferred ratio and floor from manual adjustments.
//!
//! [`scenario`] and [`pipeline`] wire the stages together for simulation and
//! file processing, and [`cli`] exposes them on the command line.

pub mod block;
pub mod cli;
pub mod config;
pub mod error;
pub mod isolation;
pub mod meter;
pub mod pipeline;
pub mod prefs;
pub mod scenario;
pub mod solver;
pub mod spectrum;
pub mod svg;
pub mod wav;

pub use block::SampleBlock;
pub use error::{Error, Result};
