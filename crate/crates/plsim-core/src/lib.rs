//! Deterministic simulator and firmware-style controller for a rover
//! proof-of-life module: a mast-mounted payload that drills soil,
//! vacuums the tailings into a reaction bin, runs colorimetric protein
//! and sugar assays, and reports the verdicts over telemetry.
//!
//! Everything is simulated time. A mission steps at a fixed control
//! period against simple physical plants (first-order motors, a forced
//! vortex impeller, exponential reaction/decant kinetics), and every
//! random draw comes from a named stream of one master seed, so a run
//! is a pure function of its configuration.

// Validators reject bad values with `!(x > 0.0)` on purpose: the
// negated form also catches NaN, which `x <= 0.0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assay;
pub mod config;
pub mod drill;
pub mod error;
pub mod faults;
pub mod hal;
pub mod mission;
pub mod montecarlo;
pub mod perception;
pub mod pulley;
pub mod rng;
pub mod telemetry;
pub mod vacuum;
pub mod world;

pub use error::{Error, Result};
