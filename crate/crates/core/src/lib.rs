//! Photometric bundle adjustment for pinhole (RGB-D) and spherical (LiDAR)
//! sensors.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ba;
pub mod cue;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod selfalign;
pub mod sensor;
pub mod synth;

pub use error::{Error, ErrorFamily, Result};
