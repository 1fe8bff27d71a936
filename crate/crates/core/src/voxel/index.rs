use rustc_hash::FxHashMap;

use super::coord::GridCoord;

/// Hash index from coordinate to row.
///
/// Keys flatten the coordinate over the bounding box of the indexed set,
/// `((x - x0) * Y + (y - y0)) * Z + (z - z0)`, so two distinct coordinates
/// inside the box never share a key. Coordinates outside the box are rejected
/// before hashing.
#[derive(Debug, Clone)]
pub struct CoordIndex<C> {
    min: [i64; 3],
    dims: [i64; 3],
    map: FxHashMap<u64, u32>,
    _coord: std::marker::PhantomData<C>,
}

impl<C: GridCoord> CoordIndex<C> {
    pub fn build(coords: &[C]) -> Self {
        let mut min = [0i64; 3];
        let mut max = [0i64; 3];
        if let Some(first) = coords.first() {
            for i in 0..C::DIM {
                min[i] = first.axis(i) as i64;
                max[i] = first.axis(i) as i64;
            }
        }
        for c in coords {
            for i in 0..C::DIM {
                let v = c.axis(i) as i64;
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        let mut dims = [1i64; 3];
        for i in 0..C::DIM {
            dims[i] = max[i] - min[i] + 1;
        }
        let mut index = CoordIndex {
            min,
            dims,
            map: FxHashMap::default(),
            _coord: std::marker::PhantomData,
        };
        index.map.reserve(coords.len());
        for (row, c) in coords.iter().enumerate() {
            let key = index.key(c).expect("coordinate inside its own bounding box");
            index.map.insert(key, row as u32);
        }
        index
    }

    fn key(&self, c: &C) -> Option<u64> {
        let mut key = 0i64;
        for i in 0..3 {
            let v = if i < C::DIM {
                c.axis(i) as i64 - self.min[i]
            } else {
                0
            };
            if v < 0 || v >= self.dims[i] {
                return None;
            }
            key = key * self.dims[i] + v;
        }
        Some(key as u64)
    }

    /// Row of `c`, or `None` when absent.
    #[inline]
    pub fn lookup(&self, c: &C) -> Option<usize> {
        let key = self.key(c)?;
        self.map.get(&key).map(|&r| r as usize)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Approximate resident size in bytes (key + value per entry).
    pub fn approx_bytes(&self) -> usize {
        self.map.len() * (std::mem::size_of::<u64>() + std::mem::size_of::<u32>())
    }
}
