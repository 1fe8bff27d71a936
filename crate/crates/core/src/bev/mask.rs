use crate::voxel::{BevExtent, Coord2, SparseVoxelTensor};

/// Set of kept BEV cells; everything else in the extent is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevMask {
    extent: BevExtent,
    keep: Vec<bool>,
}

impl BevMask {
    pub fn from_kept(extent: BevExtent, kept: impl IntoIterator<Item = Coord2>) -> Self {
        let mut keep = vec![false; extent.cells()];
        for c in kept {
            if extent.contains(c) {
                keep[extent.index(c)] = true;
            }
        }
        BevMask { extent, keep }
    }

    pub fn full(extent: BevExtent) -> Self {
        BevMask {
            extent,
            keep: vec![true; extent.cells()],
        }
    }

    pub fn none(extent: BevExtent) -> Self {
        BevMask {
            extent,
            keep: vec![false; extent.cells()],
        }
    }

    pub fn extent(&self) -> BevExtent {
        self.extent
    }

    pub fn keeps(&self, c: Coord2) -> bool {
        self.extent.contains(c) && self.keep[self.extent.index(c)]
    }

    /// Kept cells in lexicographic `(u, v)` order.
    pub fn kept(&self) -> Vec<Coord2> {
        let mut out = Vec::new();
        for u in 0..self.extent.w {
            for v in 0..self.extent.h {
                let c = Coord2::new(u, v);
                if self.keep[self.extent.index(c)] {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    pub fn intersect(&self, other: &BevMask) -> BevMask {
        assert_eq!(self.extent, other.extent, "mask extents differ");
        BevMask {
            extent: self.extent,
            keep: self.keep.iter().zip(&other.keep).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Row-major 0/1 values, for export.
    pub fn values(&self) -> Vec<f64> {
        self.keep.iter().map(|k| if *k { 1.0 } else { 0.0 }).collect()
    }
}

/// Keeps exactly the voxels whose column the mask keeps; the others are
/// removed from the tensor rather than zeroed.
pub fn lift_mask_2d_to_3d(mask: &BevMask, t: &SparseVoxelTensor) -> SparseVoxelTensor {
    t.retain_rows(|_, c| mask.keeps(c.column()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::Coord3;
    use proptest::prelude::*;

    fn tensor(raw: &[(i32, i32, i32)]) -> SparseVoxelTensor {
        let coords: Vec<Coord3> = raw.iter().map(|r| Coord3::new(r.0, r.1, r.2)).collect();
        let n = coords.len();
        SparseVoxelTensor::canonicalize(coords, (0..n).map(|i| i as f32).collect(), 1).unwrap()
    }

    #[test]
    fn full_and_empty() {
        let e = BevExtent::new(4, 4);
        let t = tensor(&[(0, 0, 0), (1, 3, 2), (3, 3, 3)]);
        assert_eq!(lift_mask_2d_to_3d(&BevMask::full(e), &t), t);
        assert!(lift_mask_2d_to_3d(&BevMask::none(e), &t).is_empty());
    }

    proptest! {
        #[test]
        fn membership_and_composition(
            raw in prop::collection::vec((0i32..6, 0i32..6, 0i32..4), 0..80),
            a in prop::collection::vec(any::<bool>(), 36),
            b in prop::collection::vec(any::<bool>(), 36),
        ) {
            let e = BevExtent::new(6, 6);
            let t = tensor(&raw);
            let cells: Vec<Coord2> = (0..6).flat_map(|u| (0..6).map(move |v| Coord2::new(u, v))).collect();
            let ma = BevMask::from_kept(e, cells.iter().copied().filter(|c| a[e.index(*c)]));
            let mb = BevMask::from_kept(e, cells.iter().copied().filter(|c| b[e.index(*c)]));
            let lifted = lift_mask_2d_to_3d(&ma, &t);
            let want: Vec<Coord3> = t.coords().iter().copied().filter(|c| a[e.index(c.column())]).collect();
            prop_assert_eq!(lifted.coords(), &want[..]);
            let seq = lift_mask_2d_to_3d(&mb, &lifted);
            let both = lift_mask_2d_to_3d(&ma.intersect(&mb), &t);
            prop_assert_eq!(seq, both);
        }
    }
}
