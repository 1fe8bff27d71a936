//! Sparse tensor types, coordinate indexing and voxelization.

mod coord;
mod drop;
mod grid;
mod index;
pub mod io;
mod tensor;

pub use coord::{Coord2, Coord3, GridCoord};
pub use drop::random_drop;
pub use grid::{voxelize, Point, Reduce, VoxelGridSpec};
pub use index::CoordIndex;
pub use tensor::{BevExtent, SparseBevTensor, SparseTensor, SparseVoxelTensor};
