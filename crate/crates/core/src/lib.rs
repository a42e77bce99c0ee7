//! Multi-sensor track-before-detect for UWB radar sensor networks.
//!
//! The processing chain runs per scan and per sliding window:
//!
//! 1. [`synth`] produces envelope-domain range profiles for every sensor.
//! 2. [`frontend`] removes static clutter with a lagged-average MTI filter.
//! 3. [`voting`] turns each profile into a score map by circle/ellipse voting,
//!    fuses the sensors multiplicatively and applies the adaptive threshold.
//! 4. [`volume`] stacks `W` score maps, grows 26-connected regions from evenly
//!    spaced seeds and refines them with a 3D opening.
//! 5. [`points`] extracts scored point measurements from each layer.
//! 6. [`tracking`] enumerates tracklets, associates them into trajectories,
//!    removes outliers and smooths.
//!
//! [`pipeline`] wires the stages together for one run and [`eval`] scores the
//! result against ground truth (OSPA, detection rate, false tracks) over Monte
//! Carlo batches.

pub mod dump;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod geometry;
pub mod lsq;
pub mod pipeline;
pub mod points;
pub mod scenario;
pub mod synth;
pub mod tracking;
pub mod volume;
pub mod voting;

pub use error::{Error, Result};
pub use geometry::Position;
pub use scenario::{ScenarioSpec, SurveillanceGrid};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
