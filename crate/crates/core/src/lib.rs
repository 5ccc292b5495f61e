//! Extrinsic calibration of acoustic cameras.
//!
//! Estimates the position of every microphone of an array directly in the
//! optical camera frame from TDOA measurements of sources mounted on a
//! calibration board whose poses are known from camera calibration.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline_grid;
pub mod error;
pub mod gccphat;
pub mod geometry;
pub mod simulator;
pub mod solver;
pub mod tdoa_model;

pub use error::{Error, Result};
