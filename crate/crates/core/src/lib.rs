//! Rolling-shutter line bundle adjustment.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod demos;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod jacobians;
pub mod metrics;
pub mod residuals;
pub mod solver;
pub mod synth;

pub use camera::{CurveCoeffs, RsCamera};
pub use error::{Error, Result};
pub use geometry::{OrthonormalLine, PluckerLine};
