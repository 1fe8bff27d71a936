//! Direct dense convolution used as a reference for the sparse path.

use super::kernel::KernelWeights;
use crate::error::{Error, Result};
use crate::voxel::{GridCoord, SparseTensor};

pub const ORACLE_MAX_EXTENT: usize = 32;

/// Dense grid of `f64` values, laid out `[site][channel]` with sites in
/// row-major order over `shape` (first axis slowest). 2-D grids use
/// `shape[2] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    pub shape: [usize; 3],
    pub channels: usize,
    pub data: Vec<f64>,
}

impl DenseGrid {
    pub fn zeros(shape: [usize; 3], channels: usize) -> Self {
        DenseGrid {
            shape,
            channels,
            data: vec![0.0; shape.iter().product::<usize>() * channels],
        }
    }

    #[inline]
    pub fn site(&self, a: [i32; 3]) -> Option<usize> {
        for (v, &n) in a.iter().zip(&self.shape) {
            if *v < 0 || *v as usize >= n {
                return None;
            }
        }
        Some((a[0] as usize * self.shape[1] + a[1] as usize) * self.shape[2] + a[2] as usize)
    }

    pub fn at(&self, a: [i32; 3]) -> Option<&[f64]> {
        let s = self.site(a)?;
        Some(&self.data[s * self.channels..(s + 1) * self.channels])
    }

    /// Scatters a sparse tensor into a dense grid; coordinates outside the
    /// grid are an error.
    pub fn from_sparse<C: GridCoord>(t: &SparseTensor<C>, shape: [usize; 3]) -> Result<Self> {
        let mut g = DenseGrid::zeros(shape, t.channels());
        for (i, c) in t.coords().iter().enumerate() {
            let s = g
                .site(c.axes())
                .ok_or_else(|| Error::Shape(format!("{c:?} outside dense grid {shape:?}")))?;
            for (d, v) in g.data[s * t.channels()..(s + 1) * t.channels()]
                .iter_mut()
                .zip(t.row(i))
            {
                *d = *v as f64;
            }
        }
        Ok(g)
    }
}

/// Textbook zero-padded cross-correlation: output `q` sums
/// `in[stride*q + delta] * W_delta` over every kernel offset. Output extent is
/// `ceil(n / stride)` per axis (the input extent at stride 1).
pub fn dense_conv_oracle(input: &DenseGrid, kernel: &KernelWeights) -> Result<DenseGrid> {
    if input.shape.iter().any(|&n| n > ORACLE_MAX_EXTENT) {
        return Err(Error::OracleLimit(format!(
            "extent {:?} exceeds {ORACLE_MAX_EXTENT} per axis",
            input.shape
        )));
    }
    if input.channels != kernel.in_channels() {
        return Err(Error::Shape(format!(
            "grid has {} channels, kernel expects {}",
            input.channels,
            kernel.in_channels()
        )));
    }
    if kernel.dims() == 2 && input.shape[2] != 1 {
        return Err(Error::Shape("2-D kernel on a 3-D grid".into()));
    }
    let s = kernel.stride();
    let mut out_shape = [1usize; 3];
    for (o, i) in out_shape.iter_mut().zip(&input.shape).take(kernel.dims()) {
        *o = i.div_ceil(s);
    }
    let (c_in, c_out) = (kernel.in_channels(), kernel.out_channels());
    let mut out = DenseGrid::zeros(out_shape, c_out);
    for x in 0..out_shape[0] {
        for y in 0..out_shape[1] {
            for z in 0..out_shape[2] {
                let q = [x as i32, y as i32, z as i32];
                let o = out.site(q).unwrap();
                for (k, d) in kernel.offsets().iter().enumerate() {
                    let mut p = [0i32; 3];
                    for a in 0..3 {
                        p[a] = if a < kernel.dims() {
                            s as i32 * q[a] + d[a]
                        } else {
                            q[a]
                        };
                    }
                    let Some(src) = input.site(p) else { continue };
                    for ci in 0..c_in {
                        let xv = input.data[src * c_in + ci];
                        if xv == 0.0 {
                            continue;
                        }
                        for co in 0..c_out {
                            out.data[o * c_out + co] += xv * kernel.weight(k, ci, co) as f64;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
