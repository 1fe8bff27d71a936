use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Integer grid coordinate of dimension 2 or 3.
///
/// Kernel offsets are passed as `[i32; 3]`; two-dimensional coordinates
/// ignore the last component.
pub trait GridCoord: Copy + Ord + Eq + Hash + Debug + Send + Sync + 'static {
    const DIM: usize;

    fn axis(&self, i: usize) -> i32;

    fn from_axes(axes: [i32; 3]) -> Self;

    fn axes(&self) -> [i32; 3] {
        let mut a = [0; 3];
        for (i, v) in a.iter_mut().enumerate().take(Self::DIM) {
            *v = self.axis(i);
        }
        a
    }

    fn offset_by(&self, delta: &[i32; 3]) -> Self {
        let mut a = self.axes();
        for (i, v) in a.iter_mut().enumerate().take(Self::DIM) {
            *v += delta[i];
        }
        Self::from_axes(a)
    }

    /// Solves `stride * q = self - delta` for `q`, requiring exact divisibility
    /// on every axis.
    fn strided_source(&self, delta: &[i32; 3], stride: i32) -> Option<Self> {
        let mut a = [0; 3];
        for (i, v) in a.iter_mut().enumerate().take(Self::DIM) {
            let d = self.axis(i) - delta[i];
            if d.rem_euclid(stride) != 0 {
                return None;
            }
            *v = d.div_euclid(stride);
        }
        Some(Self::from_axes(a))
    }

    /// Whether every component lies in `0..extent[i]`.
    fn within(&self, extent: &[i32; 3]) -> bool {
        (0..Self::DIM).all(|i| {
            let v = self.axis(i);
            v >= 0 && v < extent[i]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Coord3 {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord3 {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Coord3 { x, y, z }
    }

    /// The BEV column this voxel belongs to.
    pub fn column(&self) -> Coord2 {
        Coord2::new(self.x, self.y)
    }
}

impl GridCoord for Coord3 {
    const DIM: usize = 3;

    #[inline]
    fn axis(&self, i: usize) -> i32 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    fn from_axes(a: [i32; 3]) -> Self {
        Coord3::new(a[0], a[1], a[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Coord2 {
    pub u: i32,
    pub v: i32,
}

impl Coord2 {
    pub const fn new(u: i32, v: i32) -> Self {
        Coord2 { u, v }
    }
}

impl GridCoord for Coord2 {
    const DIM: usize = 2;

    #[inline]
    fn axis(&self, i: usize) -> i32 {
        match i {
            0 => self.u,
            _ => self.v,
        }
    }

    #[inline]
    fn from_axes(a: [i32; 3]) -> Self {
        Coord2::new(a[0], a[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_lexicographic() {
        let mut c = vec![
            Coord3::new(1, 0, 0),
            Coord3::new(0, 5, 1),
            Coord3::new(0, 5, 0),
            Coord3::new(-1, 9, 9),
        ];
        c.sort();
        assert_eq!(
            c,
            vec![
                Coord3::new(-1, 9, 9),
                Coord3::new(0, 5, 0),
                Coord3::new(0, 5, 1),
                Coord3::new(1, 0, 0)
            ]
        );
    }

    #[test]
    fn strided_source_requires_divisibility() {
        let p = Coord3::new(3, 2, 0);
        assert_eq!(p.strided_source(&[1, 0, 0], 2), Some(Coord3::new(1, 1, 0)));
        assert_eq!(p.strided_source(&[0, 0, 0], 2), None);
        assert_eq!(
            Coord2::new(-1, 0).strided_source(&[1, 0, 0], 2),
            Some(Coord2::new(-1, 0))
        );
    }
}
