//! Rulebook construction and gather-GEMM-scatter sparse convolution.

mod dense;
mod execute;
mod gemm;
mod kernel;
mod rulebook;

pub use dense::{dense_conv_oracle, DenseGrid, ORACLE_MAX_EXTENT};
pub use execute::{execute_rulebook, sparse_conv, sparse_conv_bev, sparse_conv_with, ConvOptions};
pub use gemm::gemm_acc;
pub use kernel::{kernel_offsets, ConvKind, KernelWeights};
pub use rulebook::{build_rulebook, build_rulebook_bounded, Rulebook};
