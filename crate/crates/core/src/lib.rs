//! Numerical laboratory for a strongly driven transmon.
//!
//! The transmon is treated three ways — as a quantum system in the displaced
//! frame (Floquet analysis), as a classical driven pendulum, and as a
//! reflected Brownian motion of its momentum — and each model is used to
//! drive a spectator two-level system (TLS).
//!
//! All quantities are dimensionless: time is in units of the inverse drive
//! frequency so that the drive period is [`params::PERIOD`] = 2π.

pub mod chaoscrit;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod params;
pub mod pendulum;
pub mod qtransmon;
pub mod rbm;
pub mod stats;
pub mod tlsdyn;

pub use error::{LabError, Result};
pub use params::{CircuitParams, ModelParams, PERIOD};
