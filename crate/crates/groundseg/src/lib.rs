//! Ground segmentation for 3-D LiDAR point clouds.
//!
//! The cloud is partitioned into angular segments of a polar grid; each
//! segment trains an independent Gaussian process on its lowest-per-bin
//! "ground candidate" points. Local terrain smoothness is not assumed
//! constant: a second, latent GP over log length-scales (anchored on
//! pseudo-inputs picked from extracted line segments) feeds a non-stationary
//! covariance, so one segment can be flat near the sensor and rough far out.
//! Hyperparameters and latent targets are trained jointly per segment by
//! scaled-conjugate-gradient MAP optimization, then every point is classified
//! ground/obstacle from its normalized deviation against the posterior.
//!
//! The crate is `no_std`-compatible (`alloc` required, `libm` feature for the
//! float math); file formats, CLI, and parallel scheduling live in the
//! companion `groundseg-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// Validation uses `!(v > 0.0)` on purpose: unlike `v <= 0.0`, it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The numeric kernels walk several parallel slices by index; iterator
// chains there would hide the access pattern the loops are tuned around.
#![allow(clippy::needless_range_loop)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("groundseg needs either the `std` or the `libm` feature");

extern crate alloc;

mod float;

pub mod cloud;
pub mod error;
pub mod gp;
pub mod grid;
pub mod linalg;
pub mod lines;
pub mod opt;
pub mod pipeline;
pub mod scg;
pub mod synth;

pub use cloud::{Label, LabeledCloud, Point3, PointCloud};
pub use error::Error;
pub use pipeline::{segment_ground, PipelineConfig};
