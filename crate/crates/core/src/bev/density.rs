use crate::error::{Error, Result};
use crate::voxel::{BevExtent, Coord2, Point, VoxelGridSpec};

/// Pooled point density on a BEV grid, normalized so the maximum is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHeatmap {
    pub extent: BevExtent,
    /// Row-major, `v * w + u`.
    pub values: Vec<f64>,
    pub pool: usize,
}

impl DensityHeatmap {
    pub fn at(&self, c: Coord2) -> f64 {
        self.values[self.extent.index(c)]
    }

    /// Nearest-neighbor resampling onto another extent.
    pub fn resampled(&self, target: BevExtent) -> DensityHeatmap {
        if target == self.extent {
            return self.clone();
        }
        DensityHeatmap {
            extent: target,
            values: resample_nearest(&self.values, self.extent, target),
            pool: self.pool,
        }
    }
}

/// Nearest-neighbor resampling of a row-major grid: target cell `i` reads
/// source cell `floor((i + 0.5) * src / dst)`.
pub fn resample_nearest(values: &[f64], from: BevExtent, to: BevExtent) -> Vec<f64> {
    let map = |i: i32, dst: i32, src: i32| -> i32 {
        let s = (((i as f64 + 0.5) * src as f64) / dst as f64).floor() as i32;
        s.clamp(0, src - 1)
    };
    let mut out = Vec::with_capacity(to.cells());
    for v in 0..to.h {
        let sv = map(v, to.h, from.h);
        for u in 0..to.w {
            let su = map(u, to.w, from.w);
            out.push(values[from.index(Coord2::new(su, sv))]);
        }
    }
    out
}

/// Counts points per BEV cell, average-pools with a `g x g` zero-padded
/// window and divides by the pooled maximum.
pub fn density_heatmap(points: &[Point], spec: &VoxelGridSpec, g: usize) -> Result<DensityHeatmap> {
    if g == 0 || g.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "density pooling kernel must be odd and positive, got {g}"
        )));
    }
    spec.validate()?;
    let extent = spec.bev_extent();
    let (w, h) = (extent.w as usize, extent.h as usize);
    let mut counts = vec![0.0f64; w * h];
    let mut any = false;
    for p in points {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
        }
        let fu = ((p.x as f64 - spec.origin[0]) / spec.voxel_size[0]).floor();
        let fv = ((p.y as f64 - spec.origin[1]) / spec.voxel_size[1]).floor();
        if fu < 0.0 || fv < 0.0 || fu >= w as f64 || fv >= h as f64 {
            continue;
        }
        counts[fv as usize * w + fu as usize] += 1.0;
        any = true;
    }
    if !any {
        return Err(Error::EmptyScene);
    }
    let pooled = avg_pool(&counts, w, h, g);
    let max = pooled.iter().cloned().fold(0.0f64, f64::max);
    let values = pooled.iter().map(|v| v / max).collect();
    Ok(DensityHeatmap {
        extent,
        values,
        pool: g,
    })
}

/// Separable box filter with zero padding, divided by `g^2`.
fn avg_pool(src: &[f64], w: usize, h: usize, g: usize) -> Vec<f64> {
    let r = (g / 2) as isize;
    let mut tmp = vec![0.0f64; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                let uu = u as isize + d;
                if uu >= 0 && (uu as usize) < w {
                    s += src[v * w + uu as usize];
                }
            }
            tmp[v * w + u] = s;
        }
    }
    let norm = (g * g) as f64;
    let mut out = vec![0.0f64; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = 0.0;
            for d in -r..=r {
                let vv = v as isize + d;
                if vv >= 0 && (vv as usize) < h {
                    s += tmp[vv as usize * w + u];
                }
            }
            out[v * w + u] = s / norm;
        }
    }
    out
}
