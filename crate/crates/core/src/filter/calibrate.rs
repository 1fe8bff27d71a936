use super::score::heatmap_cell;
use crate::bev::DensityHeatmap;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::predictor::PredictorNet;
use crate::voxel::SparseBevTensor;

/// One calibration input with density aligned to its extent.
#[derive(Debug, Clone)]
pub struct CalibrationScene {
    pub input: SparseBevTensor,
    pub density: DensityHeatmap,
}

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = v.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
}

/// The candidate minimizing `|Var(pred) - Var(density^beta)|` over pooled
/// per-pixel values. Ties go to the smallest candidate.
pub fn calibrate_beta_from_values(pred: &[f64], density: &[f64], candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Config("empty beta candidate grid".into()));
    }
    if pred.len() != density.len() {
        return Err(Error::Shape("predictor and density value counts differ".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let vp = variance(pred.iter().copied());
    let mut best = (f64::INFINITY, sorted[0]);
    for &b in &sorted {
        let gap = (vp - variance(density.iter().map(|d| d.powf(b)))).abs();
        if gap < best.0 {
            best = (gap, b);
        }
    }
    Ok(best.1)
}

/// Pooled predictor and density values over every stored pixel of every scene.
pub fn calibration_values(scenes: &[CalibrationScene], net: &PredictorNet, exec: ExecMode) -> Result<(Vec<f64>, Vec<f64>)> {
    let per_scene = map_indexed(exec, scenes.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let s = &scenes[i];
        if s.density.extent != s.input.extent() {
            return Err(Error::Shape("density extent differs from input extent".into()));
        }
        let heat = net.forward(&s.input, ExecMode::Sequential)?;
        let coords = s.input.coords();
        Ok((
            coords.iter().map(|&c| heat.at(heatmap_cell(c))).collect(),
            coords.iter().map(|&c| s.density.at(c)).collect(),
        ))
    });
    let mut pred = Vec::new();
    let mut dens = Vec::new();
    for r in per_scene {
        let (p, d) = r?;
        pred.extend(p);
        dens.extend(d);
    }
    Ok((pred, dens))
}

pub fn calibrate_beta(scenes: &[CalibrationScene], net: &PredictorNet, candidates: &[f64], exec: ExecMode) -> Result<f64> {
    if scenes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if candidates.is_empty() {
        return Err(Error::Config("empty beta candidate grid".into()));
    }
    let (pred, dens) = calibration_values(scenes, net, exec)?;
    calibrate_beta_from_values(&pred, &dens, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_density_picks_smallest() {
        let pred = [0.1, 0.5, 0.9];
        assert_eq!(calibrate_beta_from_values(&pred, &[1.0; 3], &[0.7, 0.3, 1.0]).unwrap(), 0.3);
    }

    #[test]
    fn constant_predictor_picks_smallest() {
        let dens = [0.1, 0.4, 0.9, 1.0];
        assert_eq!(calibrate_beta_from_values(&[0.5; 4], &dens, &[0.5, 0.1, 2.0]).unwrap(), 0.1);
    }

    #[test]
    fn matches_grid_search() {
        let dens: Vec<f64> = (1..=50).map(|i| (i as f64 / 50.0).powi(2)).collect();
        let pred: Vec<f64> = (0..50).map(|i| (i * 7 % 11) as f64 / 11.0).collect();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let best = calibrate_beta_from_values(&pred, &dens, &grid).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let gap = |b: f64| (var(&pred) - var(&dens.iter().map(|d| d.powf(b)).collect::<Vec<_>>())).abs();
        for &b in &grid {
            assert!(gap(best) <= gap(b));
        }
        assert!(best > 0.0);
    }

    #[test]
    fn empty_grid() {
        assert!(matches!(calibrate_beta_from_values(&[1.0], &[1.0], &[]), Err(Error::Config(_))));
    }
}
