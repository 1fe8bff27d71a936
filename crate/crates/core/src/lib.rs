//! Sparse voxel inference with adaptive feature filtering.
//!
//! Point clouds are voxelized into sparse tensors, run through sparse 3D
//! convolutions, projected to a bird's-eye-view grid and run through sparse 2D
//! convolutions. At configured layers a small predictor ranks BEV pixels and
//! the lowest-ranked fraction is physically removed. Every convolution charges
//! a cost ledger with exact FLOP and activation counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bev;
pub mod boxes;
pub mod conv;
pub mod cost;
pub mod engine;
pub mod error;
pub mod exec;
pub mod filter;
pub mod norm;
pub mod predictor;
pub mod voxel;

pub use error::{Error, Result};
pub use exec::ExecMode;
