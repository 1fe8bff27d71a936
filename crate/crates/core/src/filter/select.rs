use super::config::drop_count;
use crate::bev::BevMask;
use crate::error::{Error, Result};
use crate::voxel::{BevExtent, Coord2};

/// Indices of the `floor(r_drop * M)` lowest scores. Equal scores are taken
/// in lexicographic coordinate order. The result is sorted by index.
pub fn select_drops(scores: &[f64], coords: &[Coord2], r_drop: f64) -> Result<Vec<usize>> {
    if scores.len() != coords.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} coordinates",
            scores.len(),
            coords.len()
        )));
    }
    let n = drop_count(r_drop, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| scores[*a].total_cmp(&scores[*b]).then(coords[*a].cmp(&coords[*b]));
    if n > 0 && n < order.len() {
        order.select_nth_unstable_by(n - 1, cmp);
    }
    let mut dropped = order[..n].to_vec();
    dropped.sort_unstable();
    Ok(dropped)
}

/// The kept set after dropping the lowest-scoring fraction.
pub fn drop_mask(scores: &[f64], coords: &[Coord2], extent: BevExtent, r_drop: f64) -> Result<BevMask> {
    let dropped = select_drops(scores, coords, r_drop)?;
    let mut is_dropped = vec![false; coords.len()];
    for i in dropped {
        is_dropped[i] = true;
    }
    Ok(BevMask::from_kept(
        extent,
        coords.iter().zip(is_dropped).filter(|(_, d)| !d).map(|(c, _)| *c),
    ))
}
