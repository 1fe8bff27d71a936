use super::kernel::{ConvKind, KernelWeights};
use crate::error::{Error, Result};
use crate::voxel::{CoordIndex, GridCoord};

/// Input-output row pairs per kernel offset, plus the output coordinates.
///
/// Within an offset, pairs are sorted by output row; each output row appears
/// at most once per offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Rulebook<C> {
    pub out_coords: Vec<C>,
    pub offsets: Vec<[i32; 3]>,
    /// `pairs[k]` holds `(input_row, output_row)` for offset `k`.
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl<C: GridCoord> Rulebook<C> {
    pub fn total_pairs(&self) -> u64 {
        self.pairs.iter().map(|p| p.len() as u64).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.pairs.iter().map(Vec::len).collect()
    }

    /// Pair storage plus an output-coordinate hash entry per output row.
    pub fn approx_bytes(&self) -> u64 {
        self.total_pairs() * 8 + self.out_coords.len() as u64 * 12
    }
}

/// Builds the rulebook for `kernel` over the indexed input coordinates.
pub fn build_rulebook<C: GridCoord>(
    coords_in: &[C],
    kernel: &KernelWeights,
    index: &CoordIndex<C>,
) -> Result<Rulebook<C>> {
    build_rulebook_bounded(coords_in, kernel, index, None)
}

/// As [`build_rulebook`]; generative outputs outside `0..bounds` are discarded
/// (zero padding on a bounded grid).
pub fn build_rulebook_bounded<C: GridCoord>(
    coords_in: &[C],
    kernel: &KernelWeights,
    index: &CoordIndex<C>,
    bounds: Option<[i32; 3]>,
) -> Result<Rulebook<C>> {
    if kernel.dims() != C::DIM {
        return Err(Error::Shape(format!(
            "{}-D kernel applied to {}-D coordinates",
            kernel.dims(),
            C::DIM
        )));
    }
    if kernel.kind() == ConvKind::Submanifold && kernel.stride() != 1 {
        return Err(Error::Config(
            "submanifold convolution requires stride 1".into(),
        ));
    }
    let offsets = kernel.offsets().to_vec();
    match kernel.kind() {
        ConvKind::Submanifold => {
            let pairs = offsets
                .iter()
                .map(|delta| {
                    coords_in
                        .iter()
                        .enumerate()
                        .filter_map(|(j, q)| {
                            index
                                .lookup(&q.offset_by(delta))
                                .map(|i| (i as u32, j as u32))
                        })
                        .collect()
                })
                .collect();
            Ok(Rulebook {
                out_coords: coords_in.to_vec(),
                offsets,
                pairs,
            })
        }
        ConvKind::Generative => {
            let stride = kernel.stride() as i32;
            let mut out: Vec<C> = Vec::with_capacity(coords_in.len() * offsets.len() / 2);
            for p in coords_in {
                for delta in &offsets {
                    if let Some(q) = p.strided_source(delta, stride) {
                        if bounds.is_none_or(|b| q.within(&b)) {
                            out.push(q);
                        }
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            let out_index = CoordIndex::build(&out);
            let pairs = offsets
                .iter()
                .map(|delta| {
                    let mut v: Vec<(u32, u32)> = coords_in
                        .iter()
                        .enumerate()
                        .filter_map(|(i, p)| {
                            let q = p.strided_source(delta, stride)?;
                            out_index.lookup(&q).map(|j| (i as u32, j as u32))
                        })
                        .collect();
                    v.sort_unstable_by_key(|&(_, j)| j);
                    v
                })
                .collect();
            Ok(Rulebook {
                out_coords: out,
                offsets,
                pairs,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{Coord2, Coord3};

    fn rb3(coords: &[Coord3], kind: ConvKind, stride: usize) -> Rulebook<Coord3> {
        let k = KernelWeights::zeros(3, 3, stride, kind, 1, 1).unwrap();
        build_rulebook(coords, &k, &CoordIndex::build(coords)).unwrap()
    }

    #[test]
    fn isolated_voxel_submanifold() {
        let c = [Coord3::new(0, 0, 0)];
        let rb = rb3(&c, ConvKind::Submanifold, 1);
        assert_eq!(rb.out_coords, c);
        assert_eq!(rb.total_pairs(), 1);
        assert_eq!(rb.pairs[13], vec![(0, 0)]);
    }

    #[test]
    fn two_neighbors_submanifold() {
        let c = [Coord3::new(0, 0, 0), Coord3::new(1, 0, 0)];
        let rb = rb3(&c, ConvKind::Submanifold, 1);
        assert_eq!(rb.total_pairs(), 4);
        // output (0,0,0) reads (1,0,0) through offset (+1,0,0)
        let plus_x = rb.offsets.iter().position(|o| *o == [1, 0, 0]).unwrap();
        assert_eq!(rb.pairs[plus_x], vec![(1, 0)]);
        let minus_x = rb.offsets.iter().position(|o| *o == [-1, 0, 0]).unwrap();
        assert_eq!(rb.pairs[minus_x], vec![(0, 1)]);
    }

    #[test]
    fn isolated_voxel_generative_dilates() {
        let rb = rb3(&[Coord3::new(0, 0, 0)], ConvKind::Generative, 1);
        assert_eq!(rb.out_coords.len(), 27);
        assert_eq!(rb.out_coords[0], Coord3::new(-1, -1, -1));
        assert_eq!(rb.out_coords[26], Coord3::new(1, 1, 1));
        assert_eq!(rb.total_pairs(), 27);
    }

    #[test]
    fn strided_generative() {
        // p = 2q + delta: x = 3 reaches q = 1 (delta 1) and q = 2 (delta -1)
        let c = [Coord2::new(3, 0)];
        let k = KernelWeights::zeros(2, 3, 2, ConvKind::Generative, 1, 1).unwrap();
        let rb = build_rulebook(&c, &k, &CoordIndex::build(&c)).unwrap();
        assert_eq!(
            rb.out_coords,
            vec![Coord2::new(1, 0), Coord2::new(2, 0)]
        );
        let bounded =
            build_rulebook_bounded(&c, &k, &CoordIndex::build(&c), Some([2, 1, 1])).unwrap();
        assert_eq!(bounded.out_coords, vec![Coord2::new(1, 0)]);
    }

    #[test]
    fn dims_mismatch_is_shape_error() {
        let c = [Coord2::new(0, 0)];
        let k = KernelWeights::zeros(3, 3, 1, ConvKind::Submanifold, 1, 1).unwrap();
        assert!(matches!(
            build_rulebook(&c, &k, &CoordIndex::build(&c)),
            Err(Error::Shape(_))
        ));
    }
}
