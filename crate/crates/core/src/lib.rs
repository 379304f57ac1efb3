//! Edge and boundary detection in 3D point clouds from multi-scale
//! neighborhood statistics and a compact neural classifier.
//!
//! The pipeline: [`io`] reads a cloud, [`knn`] indexes it, [`features`]
//! computes twelve statistics per point and scale, [`net`] fuses adjacent
//! scales and classifies every point as non-edge, sharp-edge or boundary.
//! [`baseline`] holds the covariance-ratio threshold detector used for
//! comparison, [`metrics`] scores predictions and [`synth`] generates
//! labeled training and evaluation scenes.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod features;
pub mod geom;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use geom::Vec3;
pub use io::{ClassCode, PointCloud};
