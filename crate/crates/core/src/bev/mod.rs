//! Moving between voxel space and the BEV plane.

mod density;
pub mod export;
mod mask;
mod project;

pub use density::{density_heatmap, resample_nearest, DensityHeatmap};
pub use mask::{lift_mask_2d_to_3d, BevMask};
pub use project::project_3d_to_2d;
