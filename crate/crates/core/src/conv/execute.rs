use super::gemm::gemm_acc;
use super::kernel::KernelWeights;
use super::rulebook::{build_rulebook_bounded, Rulebook};
use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::voxel::{BevExtent, Coord2, CoordIndex, GridCoord, SparseBevTensor, SparseTensor};

#[derive(Debug, Clone, Copy, Default)]
pub struct ConvOptions {
    pub exec: ExecMode,
    /// Grid bounds for generative outputs.
    pub bounds: Option<[i32; 3]>,
}

/// Sparse convolution with default options.
pub fn sparse_conv<C: GridCoord>(
    t: &SparseTensor<C>,
    kernel: &KernelWeights,
    ledger: &mut CostLedger,
) -> Result<SparseTensor<C>> {
    sparse_conv_with(t, kernel, ledger, ConvOptions::default())
}

/// Builds the rulebook, runs gather-GEMM-scatter and charges the ledger's
/// current layer.
pub fn sparse_conv_with<C: GridCoord>(
    t: &SparseTensor<C>,
    kernel: &KernelWeights,
    ledger: &mut CostLedger,
    opts: ConvOptions,
) -> Result<SparseTensor<C>> {
    if t.channels() != kernel.in_channels() {
        return Err(Error::Shape(format!(
            "tensor has {} channels, kernel expects {}",
            t.channels(),
            kernel.in_channels()
        )));
    }
    let index = CoordIndex::build(t.coords());
    let rb = build_rulebook_bounded(t.coords(), kernel, &index, opts.bounds)?;
    let feats = execute_rulebook(t, &rb, kernel, opts.exec);
    ledger.record_conv(
        rb.total_pairs(),
        kernel.in_channels(),
        kernel.out_channels(),
        rb.out_coords.len() as u64,
        rb.approx_bytes() + index.approx_bytes() as u64,
    );
    SparseTensor::new(rb.out_coords, feats, kernel.out_channels())
}

/// Sparse convolution on a bounded BEV grid. Strided layers shrink the extent
/// by ceiling division.
pub fn sparse_conv_bev(
    t: &SparseBevTensor,
    kernel: &KernelWeights,
    ledger: &mut CostLedger,
    exec: ExecMode,
) -> Result<SparseBevTensor> {
    let s = kernel.stride() as i32;
    let extent = if s == 1 {
        t.extent()
    } else {
        t.extent().downsampled(s)
    };
    let out = sparse_conv_with::<Coord2>(
        t.tensor(),
        kernel,
        ledger,
        ConvOptions {
            exec,
            bounds: Some(extent.as_axes()),
        },
    )?;
    SparseBevTensor::new(BevExtent::new(extent.w, extent.h), out)
}

/// Output features of `rb` applied to `t`.
///
/// Per offset: gather the paired input rows into a contiguous matrix, multiply
/// by that offset's weights, scatter-add into the output rows. Scatter runs in
/// offset order, so each output row accumulates offsets in kernel order in
/// every execution mode.
pub fn execute_rulebook<C: GridCoord>(
    t: &SparseTensor<C>,
    rb: &Rulebook<C>,
    kernel: &KernelWeights,
    exec: ExecMode,
) -> Vec<f32> {
    let c_in = kernel.in_channels();
    let c_out = kernel.out_channels();
    let mut out = vec![0.0f32; rb.out_coords.len() * c_out];

    let products = map_indexed(exec, rb.pairs.len(), |k| {
        let pairs = &rb.pairs[k];
        if pairs.is_empty() {
            return Vec::new();
        }
        let mut gathered = Vec::with_capacity(pairs.len() * c_in);
        for &(i, _) in pairs {
            gathered.extend_from_slice(t.row(i as usize));
        }
        let mut prod = vec![0.0f32; pairs.len() * c_out];
        gemm_acc(&gathered, kernel.matrix(k), &mut prod, pairs.len(), c_in, c_out);
        prod
    });

    for (k, prod) in products.iter().enumerate() {
        for (row, &(_, j)) in prod.chunks_exact(c_out).zip(&rb.pairs[k]) {
            let dst = &mut out[j as usize * c_out..(j as usize + 1) * c_out];
            for (d, v) in dst.iter_mut().zip(row) {
                *d += *v;
            }
        }
    }
    out
}
