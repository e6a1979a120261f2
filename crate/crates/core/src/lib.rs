//! Trajectory forecasting for multirotor drones observed by an event camera.
//!
//! The pipeline turns a raw event stream plus per-frame bounding boxes into
//! short-horizon position forecasts:
//!
//! 1. [`rpm`] recovers propeller rotation rate from per-pixel ON/OFF event
//!    timing inside the box, with no frame reconstruction.
//! 2. [`kalman`] runs a constant-velocity filter whose process noise is
//!    scaled by the normalized rotation rate and its trend, so the filter
//!    loosens exactly when the rotors spool up for a maneuver.
//! 3. [`baselines`] provides the two reference predictors (linear
//!    extrapolation, unmodulated filter) used in every comparison.
//! 4. [`eval`] scores forecasts against ground truth (ADE/FDE) and
//!    aggregates across sequences.
//! 5. [`synth`] generates closed-form propeller event streams and drone
//!    tracks so every stage can be tested against known truth.

pub mod baselines;
pub mod eval;
pub mod events;
pub mod io;
pub mod kalman;
pub mod rpm;
pub mod scenario;
pub mod svg;
pub mod synth;
