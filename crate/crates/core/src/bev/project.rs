use crate::error::{Error, Result};
use crate::voxel::{BevExtent, Coord2, SparseBevTensor, SparseTensor, SparseVoxelTensor};

/// Sum-pools voxel features along z into BEV pixels.
pub fn project_3d_to_2d(t: &SparseVoxelTensor, extent: BevExtent) -> Result<SparseBevTensor> {
    let ch = t.channels();
    let mut coords: Vec<Coord2> = Vec::new();
    let mut feats: Vec<f32> = Vec::new();
    let mut acc = vec![0.0f64; ch];
    let mut current: Option<Coord2> = None;
    // canonical order keeps each column's voxels contiguous
    for (i, c) in t.coords().iter().enumerate() {
        let col = c.column();
        if !extent.contains(col) {
            return Err(Error::Shape(format!(
                "voxel {c:?} outside BEV extent {}x{}",
                extent.w, extent.h
            )));
        }
        if current != Some(col) {
            if let Some(prev) = current {
                coords.push(prev);
                feats.extend(acc.iter().map(|v| *v as f32));
                acc.iter_mut().for_each(|v| *v = 0.0);
            }
            current = Some(col);
        }
        for (a, v) in acc.iter_mut().zip(t.row(i)) {
            *a += *v as f64;
        }
    }
    if let Some(prev) = current {
        coords.push(prev);
        feats.extend(acc.iter().map(|v| *v as f32));
    }
    SparseBevTensor::new(extent, SparseTensor::new(coords, feats, ch)?)
}
