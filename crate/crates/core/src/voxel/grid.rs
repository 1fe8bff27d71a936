use serde::{Deserialize, Serialize};

use super::coord::Coord3;
use super::tensor::{BevExtent, SparseVoxelTensor};
use crate::error::{Error, Result};

/// A raw Lidar return: position in meters plus reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub r: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, r: f32) -> Self {
        Point { x, y, z, r }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.r.is_finite()
    }

    fn as_array(&self) -> [f32; 4] {
        [self.x, self.y, self.z, self.r]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridSpec {
    /// Minimum corner of the grid, meters.
    pub origin: [f64; 3],
    /// Cell size per axis, meters.
    pub voxel_size: [f64; 3],
    /// Cell count per axis.
    pub extent: [i32; 3],
}

impl VoxelGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.voxel_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!(
                "voxel_size must be strictly positive, got {:?}",
                self.voxel_size
            )));
        }
        if self.extent.iter().any(|e| *e <= 0) {
            return Err(Error::Config(format!(
                "grid extent must be strictly positive, got {:?}",
                self.extent
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn bev_extent(&self) -> BevExtent {
        BevExtent::new(self.extent[0], self.extent[1])
    }

    pub fn cells(&self) -> usize {
        self.extent.iter().map(|&e| e as usize).product()
    }

    /// Cell containing `p`; points on a boundary belong to the upper cell
    /// (floor convention). `None` outside the grid.
    pub fn cell_of(&self, p: &Point) -> Option<Coord3> {
        let pos = [p.x as f64, p.y as f64, p.z as f64];
        let mut idx = [0i32; 3];
        for a in 0..3 {
            let f = ((pos[a] - self.origin[a]) / self.voxel_size[a]).floor();
            if f < 0.0 || f >= self.extent[a] as f64 {
                return None;
            }
            idx[a] = f as i32;
        }
        Some(Coord3::new(idx[0], idx[1], idx[2]))
    }

    /// Center of cell `c` in meters.
    pub fn cell_center(&self, c: Coord3) -> [f64; 3] {
        [
            self.origin[0] + (c.x as f64 + 0.5) * self.voxel_size[0],
            self.origin[1] + (c.y as f64 + 0.5) * self.voxel_size[1],
            self.origin[2] + (c.z as f64 + 0.5) * self.voxel_size[2],
        ]
    }

    /// Continuous BEV cell coordinate of a metric position, such that the
    /// center of cell `(u, v)` maps to exactly `(u, v)`.
    pub fn bev_cell_coord(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.voxel_size[0] - 0.5,
            (y - self.origin[1]) / self.voxel_size[1] - 0.5,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    #[default]
    Mean,
    Max,
    Count,
}

impl Reduce {
    pub fn channels(self) -> usize {
        match self {
            Reduce::Count => 1,
            _ => 4,
        }
    }
}

/// Quantizes a point cloud into voxels, one output row per occupied cell.
///
/// Members of a cell are reduced in a canonical order (sorted by value), so
/// the result does not depend on input point order.
pub fn voxelize(points: &[Point], spec: &VoxelGridSpec, reduce: Reduce) -> Result<SparseVoxelTensor> {
    spec.validate()?;
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| !p.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "point {i} has a non-finite component: {p:?}"
        )));
    }
    let mut members: Vec<(Coord3, [f32; 4])> = points
        .iter()
        .filter_map(|p| spec.cell_of(p).map(|c| (c, p.as_array())))
        .collect();
    if members.is_empty() {
        return Err(Error::EmptyScene);
    }
    members.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let channels = reduce.channels();
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    let mut start = 0;
    while start < members.len() {
        let cell = members[start].0;
        let end = start
            + members[start..]
                .iter()
                .take_while(|(c, _)| *c == cell)
                .count();
        let group = &members[start..end];
        coords.push(cell);
        match reduce {
            Reduce::Count => feats.push(group.len() as f32),
            Reduce::Mean => {
                let mut sum = [0.0f64; 4];
                for (_, p) in group {
                    for k in 0..4 {
                        sum[k] += p[k] as f64;
                    }
                }
                let n = group.len() as f64;
                feats.extend(sum.iter().map(|s| (s / n) as f32));
            }
            Reduce::Max => {
                let mut m = [f32::NEG_INFINITY; 4];
                for (_, p) in group {
                    for k in 0..4 {
                        m[k] = m[k].max(p[k]);
                    }
                }
                feats.extend_from_slice(&m);
            }
        }
        start = end;
    }
    SparseVoxelTensor::new(coords, feats, channels)
}
