use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ScoreMode;
use crate::bev::DensityHeatmap;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::predictor::{Heatmap, PredictorNet, POOL};
use crate::voxel::{Coord2, SparseBevTensor};

/// Inputs shared by every scoring call at one filter point.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    pub net: Option<&'a PredictorNet>,
    /// Density aligned to the tensor's extent.
    pub density: &'a DensityHeatmap,
    pub beta: f64,
    pub mode: ScoreMode,
    /// Seed for [`ScoreMode::Random`].
    pub seed: u64,
    pub exec: ExecMode,
}

/// The coarse heatmap cell a full-resolution pixel reads: the pooling window
/// that contains it.
pub fn heatmap_cell(c: Coord2) -> Coord2 {
    Coord2::new(c.u / POOL as i32, c.v / POOL as i32)
}

/// `S(p) = Y(p') * D(p)^beta` for every stored pixel `p`.
pub fn combine_scores(coords: &[Coord2], heat: &Heatmap, density: &DensityHeatmap, beta: f64) -> Vec<f64> {
    coords
        .iter()
        .map(|&c| heat.at(heatmap_cell(c)) * density.at(c).powf(beta))
        .collect()
}

pub fn importance_score(
    x: &SparseBevTensor,
    net: &PredictorNet,
    density: &DensityHeatmap,
    beta: f64,
    exec: ExecMode,
) -> Result<Vec<f64>> {
    check_extent(x, density)?;
    let heat = net.forward(x, exec)?;
    Ok(combine_scores(x.coords(), &heat, density, beta))
}

fn check_extent(x: &SparseBevTensor, density: &DensityHeatmap) -> Result<()> {
    if density.extent != x.extent() {
        return Err(Error::Shape(format!(
            "density extent {:?} differs from tensor extent {:?}",
            density.extent,
            x.extent()
        )));
    }
    Ok(())
}

/// Scores stored pixels according to `ctx.mode`. Also returns the predictor
/// heatmap when one was computed.
pub fn score_pixels(x: &SparseBevTensor, ctx: &ScoreContext) -> Result<(Vec<f64>, Option<Heatmap>)> {
    check_extent(x, ctx.density)?;
    let need_net = || {
        ctx.net
            .ok_or_else(|| Error::Config("score mode needs a predictor".into()))
    };
    match ctx.mode {
        ScoreMode::PredictorDensity | ScoreMode::PredictorOnly => {
            let beta = if ctx.mode == ScoreMode::PredictorOnly { 0.0 } else { ctx.beta };
            let heat = need_net()?.forward(x, ctx.exec)?;
            Ok((combine_scores(x.coords(), &heat, ctx.density, beta), Some(heat)))
        }
        ScoreMode::DensityOnly => Ok((x.coords().iter().map(|&c| ctx.density.at(c)).collect(), None)),
        ScoreMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            Ok(((0..x.len()).map(|_| rng.random::<f64>()).collect(), None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{BevExtent, SparseTensor};

    fn density(e: BevExtent, v: f64) -> DensityHeatmap {
        DensityHeatmap {
            extent: e,
            values: vec![v; e.cells()],
            pool: 1,
        }
    }

    #[test]
    fn direct_substitution() {
        let e = BevExtent::new(16, 16);
        let heat = Heatmap::filled(BevExtent::new(2, 2), 0.5);
        let s = combine_scores(&[Coord2::new(3, 9)], &heat, &density(e, 0.25), 0.5);
        assert_eq!(s, vec![0.25]);
        let s = combine_scores(&[Coord2::new(3, 9)], &heat, &density(e, 0.25), 0.0);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn heatmap_alignment() {
        let heat = Heatmap::new(BevExtent::new(2, 1), vec![0.1, 0.9]).unwrap();
        let d = density(BevExtent::new(12, 3), 1.0);
        let s = combine_scores(&[Coord2::new(7, 2), Coord2::new(8, 0), Coord2::new(11, 1)], &heat, &d, 1.0);
        assert_eq!(s, vec![0.1, 0.9, 0.9]);
    }

    #[test]
    fn extent_mismatch() {
        let e = BevExtent::new(8, 8);
        let x = SparseBevTensor::new(e, SparseTensor::new(vec![Coord2::new(1, 1)], vec![1.0], 1).unwrap()).unwrap();
        let net = PredictorNet::zeros(&[1]).unwrap();
        let err = importance_score(&x, &net, &density(BevExtent::new(4, 4), 1.0), 0.5, ExecMode::Sequential);
        assert!(matches!(err, Err(Error::Shape(_))));
        let ok = importance_score(&x, &net, &density(e, 1.0), 0.5, ExecMode::Sequential).unwrap();
        assert_eq!(ok, vec![0.5]);
    }
}
