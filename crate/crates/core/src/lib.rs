//! Pothole area estimation from object detections and metric depth maps.
//!
//! Detections are tracked across frames, each tracked pothole's area is
//! measured by triangulating its back-projected pixels, and per-track area
//! series are smoothed by a scalar Kalman filter whose measurement noise
//! grows with low detection confidence and large camera distance.

pub mod bayesopt;
pub mod bench;
pub mod cdkf;
pub mod error;
pub mod io;
pub mod mbtp;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod projection;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
