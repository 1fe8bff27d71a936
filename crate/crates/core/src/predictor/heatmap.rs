use serde::{Deserialize, Serialize};

use crate::boxes::GroundTruthBox;
use crate::error::{Error, Result};
use crate::voxel::{BevExtent, Coord2};

pub const DEFAULT_SIGMA: f64 = 5.0;

/// A dense single-channel map over a BEV grid, row-major (`v * w + u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub extent: BevExtent,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn new(extent: BevExtent, values: Vec<f64>) -> Result<Self> {
        if values.len() != extent.cells() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} heatmap",
                values.len(),
                extent.w,
                extent.h
            )));
        }
        Ok(Heatmap { extent, values })
    }

    pub fn filled(extent: BevExtent, value: f64) -> Self {
        Heatmap {
            extent,
            values: vec![value; extent.cells()],
        }
    }

    pub fn at(&self, c: Coord2) -> f64 {
        self.values[self.extent.index(c)]
    }
}

/// Sum of unit-peak Gaussians centered on each box, clamped to 1.
///
/// Box centers must already be expressed in cells of `extent`.
pub fn gt_heatmap(boxes: &[GroundTruthBox], extent: BevExtent, sigma: f64) -> Result<Heatmap> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let mut values = vec![0.0f64; extent.cells()];
    let denom = 2.0 * sigma * sigma;
    // Contributions below ~1e-17 cannot change a sum that is clamped to 1.
    let reach = (sigma * (40.0f64).sqrt() * 1.5).ceil();
    // Sum in a canonical box order so the result does not depend on input order.
    let mut sorted: Vec<&GroundTruthBox> = boxes.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |x: &GroundTruthBox| [x.center[0], x.center[1], x.half_extent[0], x.half_extent[1], x.yaw];
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for b in sorted {
        let [cu, cv] = b.center;
        let u0 = ((cu - reach).floor() as i64).max(0);
        let u1 = ((cu + reach).ceil() as i64).min(extent.w as i64 - 1);
        let v0 = ((cv - reach).floor() as i64).max(0);
        let v1 = ((cv + reach).ceil() as i64).min(extent.h as i64 - 1);
        for v in v0..=v1 {
            for u in u0..=u1 {
                let d2 = (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2);
                values[v as usize * extent.w as usize + u as usize] += (-d2 / denom).exp();
            }
        }
    }
    for v in &mut values {
        *v = v.min(1.0);
    }
    Ok(Heatmap { extent, values })
}

pub fn mse_loss(pred: &Heatmap, gt: &Heatmap) -> Result<f64> {
    if pred.extent != gt.extent {
        return Err(Error::Shape(format!(
            "heatmap extents differ: {:?} vs {:?}",
            pred.extent, gt.extent
        )));
    }
    let n = pred.values.len().max(1) as f64;
    Ok(pred
        .values
        .iter()
        .zip(&gt.values)
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / n)
}
