use serde::{Deserialize, Serialize};

use super::coord::{Coord2, Coord3, GridCoord};
use crate::error::{Error, Result};

/// Sparse feature tensor in canonical form: coordinates unique and sorted,
/// features stored row-major as `len() x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor<C> {
    coords: Vec<C>,
    feats: Vec<f32>,
    channels: usize,
}

pub type SparseVoxelTensor = SparseTensor<Coord3>;

impl<C: GridCoord> SparseTensor<C> {
    /// Builds a tensor from coordinates that are already canonical.
    pub fn new(coords: Vec<C>, feats: Vec<f32>, channels: usize) -> Result<Self> {
        if feats.len() != coords.len() * channels {
            return Err(Error::Shape(format!(
                "{} coordinates x {} channels does not match {} feature values",
                coords.len(),
                channels,
                feats.len()
            )));
        }
        if let Some(w) = coords.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "coordinates not strictly increasing at {:?}, {:?}",
                w[0], w[1]
            )));
        }
        Ok(SparseTensor {
            coords,
            feats,
            channels,
        })
    }

    /// Sorts rows by coordinate; rows sharing a coordinate are merged by
    /// summing their features.
    pub fn canonicalize(coords: Vec<C>, feats: Vec<f32>, channels: usize) -> Result<Self> {
        if feats.len() != coords.len() * channels {
            return Err(Error::Shape(format!(
                "{} coordinates x {} channels does not match {} feature values",
                coords.len(),
                channels,
                feats.len()
            )));
        }
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_by_key(|&i| (coords[i], i));
        let mut out_coords: Vec<C> = Vec::with_capacity(coords.len());
        let mut out_feats: Vec<f32> = Vec::with_capacity(feats.len());
        for i in order {
            let row = &feats[i * channels..(i + 1) * channels];
            if out_coords.last() == Some(&coords[i]) {
                let start = out_feats.len() - channels;
                for (acc, v) in out_feats[start..].iter_mut().zip(row) {
                    *acc += *v;
                }
            } else {
                out_coords.push(coords[i]);
                out_feats.extend_from_slice(row);
            }
        }
        Ok(SparseTensor {
            coords: out_coords,
            feats: out_feats,
            channels,
        })
    }

    pub fn empty(channels: usize) -> Self {
        SparseTensor {
            coords: Vec::new(),
            feats: Vec::new(),
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coords(&self) -> &[C] {
        &self.coords
    }

    pub fn feats(&self) -> &[f32] {
        &self.feats
    }

    pub fn feats_mut(&mut self) -> &mut [f32] {
        &mut self.feats
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.feats[i * self.channels..(i + 1) * self.channels]
    }

    pub fn into_parts(self) -> (Vec<C>, Vec<f32>, usize) {
        (self.coords, self.feats, self.channels)
    }

    /// Keeps the rows for which `keep` returns true, preserving order.
    pub fn retain_rows(&self, mut keep: impl FnMut(usize, &C) -> bool) -> Self {
        let mut coords = Vec::new();
        let mut feats = Vec::new();
        for (i, c) in self.coords.iter().enumerate() {
            if keep(i, c) {
                coords.push(*c);
                feats.extend_from_slice(self.row(i));
            }
        }
        SparseTensor {
            coords,
            feats,
            channels: self.channels,
        }
    }

    /// Same coordinates, features replaced.
    pub fn with_feats(&self, feats: Vec<f32>, channels: usize) -> Result<Self> {
        if feats.len() != self.coords.len() * channels {
            return Err(Error::Shape(format!(
                "expected {} feature values, got {}",
                self.coords.len() * channels,
                feats.len()
            )));
        }
        Ok(SparseTensor {
            coords: self.coords.clone(),
            feats,
            channels,
        })
    }

    pub fn map_feats(&self, f: impl Fn(f32) -> f32) -> Self {
        SparseTensor {
            coords: self.coords.clone(),
            feats: self.feats.iter().map(|&v| f(v)).collect(),
            channels: self.channels,
        }
    }

    /// Per-channel sum over all rows, in f64.
    pub fn channel_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for row in self.feats.chunks_exact(self.channels.max(1)) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += *v as f64;
            }
        }
        sums
    }
}

/// Width (u axis) and height (v axis) of a BEV grid in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BevExtent {
    pub w: i32,
    pub h: i32,
}

impl BevExtent {
    pub fn new(w: i32, h: i32) -> Self {
        BevExtent { w, h }
    }

    pub fn cells(&self) -> usize {
        (self.w.max(0) as usize) * (self.h.max(0) as usize)
    }

    pub fn contains(&self, c: Coord2) -> bool {
        c.u >= 0 && c.v >= 0 && c.u < self.w && c.v < self.h
    }

    /// Row-major index, `v` selecting the row.
    #[inline]
    pub fn index(&self, c: Coord2) -> usize {
        c.v as usize * self.w as usize + c.u as usize
    }

    pub fn as_axes(&self) -> [i32; 3] {
        [self.w, self.h, 1]
    }

    /// Extent after downsampling by `factor` with ceiling division.
    pub fn downsampled(&self, factor: i32) -> BevExtent {
        BevExtent::new(
            (self.w + factor - 1) / factor,
            (self.h + factor - 1) / factor,
        )
    }
}

/// A sparse tensor on a bounded BEV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBevTensor {
    extent: BevExtent,
    tensor: SparseTensor<Coord2>,
}

impl SparseBevTensor {
    pub fn new(extent: BevExtent, tensor: SparseTensor<Coord2>) -> Result<Self> {
        if let Some(c) = tensor.coords().iter().find(|c| !extent.contains(**c)) {
            return Err(Error::Shape(format!(
                "BEV coordinate {:?} outside extent {}x{}",
                c, extent.w, extent.h
            )));
        }
        Ok(SparseBevTensor { extent, tensor })
    }

    pub fn empty(extent: BevExtent, channels: usize) -> Self {
        SparseBevTensor {
            extent,
            tensor: SparseTensor::empty(channels),
        }
    }

    /// Stores every cell of a dense buffer laid out as `dense[idx * channels + c]`
    /// with `idx = v * w + u`.
    pub fn from_dense(extent: BevExtent, dense: Vec<f32>, channels: usize) -> Result<Self> {
        let coords: Vec<Coord2> = (0..extent.w)
            .flat_map(|u| (0..extent.h).map(move |v| Coord2::new(u, v)))
            .collect();
        if dense.len() != extent.cells() * channels {
            return Err(Error::Shape(format!(
                "dense buffer has {} values, expected {}",
                dense.len(),
                extent.cells() * channels
            )));
        }
        let mut feats = Vec::with_capacity(dense.len());
        for c in &coords {
            let i = extent.index(*c);
            feats.extend_from_slice(&dense[i * channels..(i + 1) * channels]);
        }
        Ok(SparseBevTensor {
            extent,
            tensor: SparseTensor::new(coords, feats, channels)?,
        })
    }

    pub fn extent(&self) -> BevExtent {
        self.extent
    }

    pub fn tensor(&self) -> &SparseTensor<Coord2> {
        &self.tensor
    }

    pub fn into_tensor(self) -> SparseTensor<Coord2> {
        self.tensor
    }

    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels()
    }

    pub fn coords(&self) -> &[Coord2] {
        self.tensor.coords()
    }

    pub fn feats(&self) -> &[f32] {
        self.tensor.feats()
    }

    pub fn dense_rate(&self) -> f64 {
        let cells = self.extent.cells();
        if cells == 0 {
            0.0
        } else {
            self.len() as f64 / cells as f64
        }
    }

    /// Dense `(h*w) x channels` buffer with absent cells set to zero.
    pub fn to_dense(&self) -> Vec<f32> {
        let ch = self.channels();
        let mut out = vec![0.0f32; self.extent.cells() * ch];
        for (i, c) in self.coords().iter().enumerate() {
            let d = self.extent.index(*c);
            out[d * ch..(d + 1) * ch].copy_from_slice(self.tensor.row(i));
        }
        out
    }

    pub fn retain_rows(&self, keep: impl FnMut(usize, &Coord2) -> bool) -> Self {
        SparseBevTensor {
            extent: self.extent,
            tensor: self.tensor.retain_rows(keep),
        }
    }
}
