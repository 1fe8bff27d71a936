//! Ground-truth boxes in BEV cell coordinates.

use serde::{Deserialize, Serialize};

use crate::voxel::{Coord2, Coord3};

/// An object footprint on a BEV grid.
///
/// Positions are continuous cell coordinates: the center of cell `(u, v)` is
/// at exactly `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
}

impl GroundTruthBox {
    pub fn new(center: [f64; 2], half_extent: [f64; 2], yaw: f64) -> Self {
        GroundTruthBox {
            center,
            half_extent,
            yaw,
        }
    }

    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        let du = u - self.center[0];
        let dv = v - self.center[1];
        let (s, c) = self.yaw.sin_cos();
        // rotate into the box frame
        let lu = c * du + s * dv;
        let lv = -s * du + c * dv;
        lu.abs() <= self.half_extent[0] && lv.abs() <= self.half_extent[1]
    }

    pub fn contains_cell(&self, c: Coord2) -> bool {
        self.contains_point(c.u as f64, c.v as f64)
    }

    pub fn contains_column(&self, c: Coord3) -> bool {
        self.contains_point(c.x as f64, c.y as f64)
    }

    /// The same footprint on a grid coarser by `factor`, where coarse cell `i`
    /// covers fine cells `factor*i .. factor*(i+1)`.
    pub fn downscaled(&self, factor: f64) -> Self {
        GroundTruthBox {
            center: [
                (self.center[0] + 0.5) / factor - 0.5,
                (self.center[1] + 0.5) / factor - 0.5,
            ],
            half_extent: [self.half_extent[0] / factor, self.half_extent[1] / factor],
            yaw: self.yaw,
        }
    }
}

pub fn any_contains(boxes: &[GroundTruthBox], c: Coord2) -> bool {
    boxes.iter().any(|b| b.contains_cell(c))
}
