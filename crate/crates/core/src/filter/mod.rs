//! Score-based spatial filtering of sparse features.

mod calibrate;
mod config;
mod score;
mod select;

pub use calibrate::{calibrate_beta, calibrate_beta_from_values, calibration_values, CalibrationScene};
pub use config::{drop_count, FilterConfig, ScoreMode, TieBreak};
pub use score::{combine_scores, heatmap_cell, importance_score, score_pixels, ScoreContext};
pub use select::{drop_mask, select_drops};

use crate::bev::{lift_mask_2d_to_3d, project_3d_to_2d, BevMask};
use crate::boxes::{any_contains, GroundTruthBox};
use crate::error::Result;
use crate::predictor::Heatmap;
use crate::voxel::{BevExtent, Coord2, SparseBevTensor, SparseVoxelTensor};

/// Result of one filter point.
#[derive(Debug, Clone)]
pub struct Filtered<T> {
    pub output: T,
    pub mask: BevMask,
    /// Dropped BEV pixels (or voxel columns), lexicographic.
    pub dropped: Vec<Coord2>,
    /// Scores of the stored pixels that were ranked, in coordinate order.
    pub scores: Vec<f64>,
    pub heatmap: Option<Heatmap>,
}

/// Kept mask, dropped pixels, scores and predictor heatmap of one ranking.
type Ranking = (BevMask, Vec<Coord2>, Vec<f64>, Option<Heatmap>);

fn rank(bev: &SparseBevTensor, r_drop: f64, ctx: &ScoreContext) -> Result<Ranking> {
    if r_drop == 0.0 {
        let kept = BevMask::from_kept(bev.extent(), bev.coords().iter().copied());
        return Ok((kept, Vec::new(), Vec::new(), None));
    }
    let (scores, heat) = score_pixels(bev, ctx)?;
    let dropped_idx = select_drops(&scores, bev.coords(), r_drop)?;
    let dropped: Vec<Coord2> = dropped_idx.iter().map(|&i| bev.coords()[i]).collect();
    let mut keep = vec![true; bev.len()];
    for &i in &dropped_idx {
        keep[i] = false;
    }
    let mask = BevMask::from_kept(
        bev.extent(),
        bev.coords().iter().zip(&keep).filter(|(_, k)| **k).map(|(c, _)| *c),
    );
    Ok((mask, dropped, scores, heat))
}

/// Drops the lowest-scoring fraction of stored BEV pixels.
pub fn filter_2d(t: &SparseBevTensor, r_drop: f64, ctx: &ScoreContext) -> Result<Filtered<SparseBevTensor>> {
    let (mask, dropped, scores, heatmap) = rank(t, r_drop, ctx)?;
    let output = if dropped.is_empty() {
        t.clone()
    } else {
        t.retain_rows(|_, c| mask.keeps(*c))
    };
    Ok(Filtered {
        output,
        mask,
        dropped,
        scores,
        heatmap,
    })
}

/// Projects to BEV, ranks columns and removes every voxel of a dropped column.
pub fn filter_3d(
    t: &SparseVoxelTensor,
    extent: BevExtent,
    r_drop: f64,
    ctx: &ScoreContext,
) -> Result<Filtered<SparseVoxelTensor>> {
    let bev = project_3d_to_2d(t, extent)?;
    let (mask, dropped, scores, heatmap) = rank(&bev, r_drop, ctx)?;
    let output = if dropped.is_empty() {
        t.clone()
    } else {
        lift_mask_2d_to_3d(&mask, t)
    };
    Ok(Filtered {
        output,
        mask,
        dropped,
        scores,
        heatmap,
    })
}

/// Fraction of dropped coordinates inside any box; 0 when nothing was dropped.
pub fn r_inbox(dropped: &[Coord2], boxes: &[GroundTruthBox]) -> f64 {
    if dropped.is_empty() {
        return 0.0;
    }
    let inside = dropped.iter().filter(|c| any_contains(boxes, **c)).count();
    inside as f64 / dropped.len() as f64
}
