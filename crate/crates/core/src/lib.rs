//! SAR-optical stereogrammetry.
//!
//! The crate covers the whole chain from rigorous sensor models to an
//! evaluated point cloud:
//!
//! - [`geometry`]: push-broom and range-Doppler sensor models
//! - [`rpc`]: rational polynomial models and terrain-independent fitting
//! - [`epipolar`]: epipolar curves by height sweep and in closed form
//! - [`adjust`]: affine bias block adjustment of the optical RPCs
//! - [`sgm`]: semi-global matching along implicit epipolar curves
//! - [`triangulate`]: ray intersection through both RPC models
//! - [`eval`]: octree kNN plane-fit accuracy assessment
//! - [`simulate`]: synthetic scenes and sensors used as ground truth
//! - [`pipeline`]: stage orchestration used by the `sarstereo` binary

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjust;
pub mod epipolar;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod rpc;
pub mod sgm;
pub mod simulate;
pub mod triangulate;

pub use error::{Error, Result};
