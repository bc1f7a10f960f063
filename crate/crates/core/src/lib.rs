//! Inertial navigation for head-worn earables: sensor calibration, heading estimation,
//! stride-based dead reckoning and particle-filter fusion of two devices and GPS.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod datamodel;
pub mod displacement;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod heading;
pub mod pipeline;
pub mod synth;
pub mod trace_io;

pub use error::{Error, Result};
