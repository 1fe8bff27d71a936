//! Mean-squared-error training with Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heatmap::{gt_heatmap, mse_loss, Heatmap, DEFAULT_SIGMA};
use super::net::{max_pool, NetGrad, PredictorNet, POOL};
use crate::boxes::GroundTruthBox;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::voxel::SparseBevTensor;

/// A training input with its boxes in the input grid's cell coordinates.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: SparseBevTensor,
    pub boxes: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    #[default]
    OneCycle,
}

impl Schedule {
    /// Learning rate for `step` of `total`. One-cycle ramps linearly from
    /// `peak / 25` to `peak` over the first 30% of steps, then back down.
    pub fn lr(self, peak: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => peak,
            Schedule::OneCycle => {
                let lo = peak / 25.0;
                let warm = ((0.3 * total as f64).round() as usize).max(1);
                if step < warm {
                    lo + (peak - lo) * step as f64 / warm as f64
                } else {
                    let rest = total.saturating_sub(1 + warm).max(1);
                    let t = ((step - warm) as f64 / rest as f64).min(1.0);
                    peak - (peak - lo) * t
                }
            }
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "one-cycle" | "onecycle" | "one_cycle" => Ok(Schedule::OneCycle),
            _ => Err(Error::Config(format!("unknown schedule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub sigma: f64,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.003,
            schedule: Schedule::OneCycle,
            batch_size: 1,
            sigma: DEFAULT_SIGMA,
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub net: PredictorNet,
    /// Mean pre-update loss over the steps of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Dataset loss before the first and after the last update.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
}

/// Adam with bias correction. A tensor without a gradient in a step keeps
/// its parameters and moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }
}

impl Adam {
    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Option<&Vec<f64>>], lr: f64) {
        assert_eq!(params.len(), grads.len());
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

pub fn sample_loss(net: &PredictorNet, input: &SparseBevTensor, target: &Heatmap, exec: ExecMode) -> Result<f64> {
    mse_loss(&net.forward(input, exec)?, target)
}

/// Loss and exact gradient of `mse(forward(input), target)`.
pub fn loss_and_gradient(
    net: &PredictorNet,
    input: &SparseBevTensor,
    target: &Heatmap,
    exec: ExecMode,
) -> Result<(f64, NetGrad)> {
    let trace = net.trace(input, exec)?;
    let pred = Heatmap::new(target.extent, trace.y.clone())
        .map_err(|_| Error::Shape("target extent does not match predictor output".into()))?;
    let loss = mse_loss(&pred, target)?;
    let n = target.values.len() as f64;
    let dl: Vec<f64> = pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(p, g)| 2.0 * (p - g) / n)
        .collect();
    Ok((loss, net.backward(&trace, &dl, exec)))
}

pub fn analytic_gradient(net: &PredictorNet, input: &SparseBevTensor, target: &Heatmap) -> Result<NetGrad> {
    loss_and_gradient(net, input, target, ExecMode::Sequential).map(|(_, g)| g)
}

/// Sets a fixed per-channel input scale of `1 / rms` on every head that has
/// none, using the pooled inputs of matching width.
pub fn fit_input_scales<'a>(net: &mut PredictorNet, inputs: impl IntoIterator<Item = &'a SparseBevTensor>) {
    let mut acc: std::collections::BTreeMap<usize, (Vec<f64>, usize)> = Default::default();
    for x in inputs {
        let c = x.channels();
        if net.head(c).is_none_or(|h| h.input_scale.is_some()) {
            continue;
        }
        let (p, h, w) = max_pool(x);
        let e = acc.entry(c).or_insert_with(|| (vec![0.0; c], 0));
        for ch in 0..c {
            e.0[ch] += p[ch * h * w..][..h * w].iter().map(|v| v * v).sum::<f64>();
        }
        e.1 += h * w;
    }
    for (c, (sq, n)) in acc {
        let scale = sq
            .iter()
            .map(|s| {
                let rms = (s / n.max(1) as f64).sqrt();
                if rms > 0.0 && rms.is_finite() { 1.0 / rms } else { 1.0 }
            })
            .collect();
        net.head_mut(c).unwrap().input_scale = Some(scale);
    }
}

fn dataset_loss(net: &PredictorNet, data: &[(SparseBevTensor, Heatmap)], exec: ExecMode) -> Result<f64> {
    let losses = map_indexed(exec, data.len(), |i| sample_loss(net, &data[i].0, &data[i].1, ExecMode::Sequential));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len() as f64)
}

/// Trains on explicit target heatmaps.
pub fn train_on_targets(
    mut net: PredictorNet,
    data: &[(SparseBevTensor, Heatmap)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let exec = cfg.exec;
    let initial_loss = dataset_loss(&net, data, exec)?;
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut adam = Adam::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = map_indexed(exec, batch.len(), |j| {
                let (x, t) = &data[batch[j]];
                loss_and_gradient(&net, x, t, ExecMode::Sequential)
            });
            let mut loss = 0.0;
            let mut grad = NetGrad::zeros_like(&net);
            for r in results {
                let (l, g) = r?;
                loss += l;
                grad.add(&g);
            }
            let b = batch.len() as f64;
            loss /= b;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            grad.scale(1.0 / b);
            let widths = net.input_widths();
            let mut grads: Vec<Option<&Vec<f64>>> = Vec::new();
            for c in &widths {
                match grad.heads.get(c) {
                    Some(g) => grads.extend([Some(&g.weight), Some(&g.bias)]),
                    None => grads.extend([None, None]),
                }
            }
            for g in grad.trunk.iter().chain(std::iter::once(&grad.out)) {
                grads.extend([Some(&g.weight), Some(&g.bias)]);
            }
            let lr = cfg.schedule.lr(cfg.lr, step, total);
            adam.step(net.tensors_mut(), &grads, lr);
            epoch_loss += loss;
            step += 1;
        }
        let mean = epoch_loss / per_epoch as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    let final_loss = dataset_loss(&net, data, exec)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { step, loss: final_loss });
    }
    Ok(TrainReport {
        net,
        epoch_losses,
        initial_loss,
        final_loss,
        steps: step,
    })
}

/// Builds Gaussian targets from each sample's boxes and trains on them.
/// Heads with no input scale get one fitted from the dataset first.
pub fn train_predictor(mut net: PredictorNet, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in dataset {
        net.add_head(s.input.channels(), cfg.seed)?;
    }
    fit_input_scales(&mut net, dataset.iter().map(|s| &s.input));
    let data = targets(dataset, cfg.sigma)?;
    train_on_targets(net, &data, cfg)
}

pub(crate) fn targets(dataset: &[TrainSample], sigma: f64) -> Result<Vec<(SparseBevTensor, Heatmap)>> {
    dataset
        .iter()
        .map(|s| {
            let extent = PredictorNet::output_extent(s.input.extent());
            let boxes: Vec<GroundTruthBox> = s.boxes.iter().map(|b| b.downscaled(POOL as f64)).collect();
            Ok((s.input.clone(), gt_heatmap(&boxes, extent, sigma)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{BevExtent, Coord2, SparseTensor};
    use rand::Rng;

    fn random_input(e: BevExtent, c: usize, n: usize, seed: u64) -> SparseBevTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n)
            .map(|_| Coord2::new(rng.random_range(0..e.w), rng.random_range(0..e.h)))
            .collect();
        let feats = (0..n * c).map(|_| rng.random_range(-1.0..2.0)).collect();
        SparseBevTensor::new(e, SparseTensor::canonicalize(coords, feats, c).unwrap()).unwrap()
    }

    #[test]
    fn one_cycle_shape() {
        let s = Schedule::OneCycle;
        assert!((s.lr(1.0, 0, 100) - 0.04).abs() < 1e-12);
        assert!((s.lr(1.0, 30, 100) - 1.0).abs() < 1e-12);
        assert!((s.lr(1.0, 99, 100) - 0.04).abs() < 1e-12);
        assert!(s.lr(1.0, 15, 100) < s.lr(1.0, 29, 100));
        assert!(s.lr(1.0, 50, 100) > s.lr(1.0, 70, 100));
        assert_eq!(Schedule::Constant.lr(0.5, 7, 10), 0.5);
        assert_eq!("one-cycle".parse::<Schedule>().unwrap(), Schedule::OneCycle);
        assert!("cosine".parse::<Schedule>().is_err());
    }

    #[test]
    fn descends_on_fixed_sample() {
        let x = random_input(BevExtent::new(32, 32), 3, 200, 1);
        let sample = TrainSample {
            input: x,
            boxes: vec![GroundTruthBox::new([8.0, 20.0], [3.0, 2.0], 0.0)],
        };
        let net = PredictorNet::seeded(&[3], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            schedule: Schedule::Constant,
            sigma: 1.0,
            ..Default::default()
        };
        let r = train_predictor(net, &[sample], &cfg).unwrap();
        assert_eq!(r.steps, 200);
        assert!(r.final_loss < r.initial_loss, "{} vs {}", r.final_loss, r.initial_loss);
    }

    #[test]
    fn stationary_point_stays_put() {
        let x = random_input(BevExtent::new(16, 16), 2, 40, 2);
        let net = PredictorNet::zeros(&[2]).unwrap();
        let target = Heatmap::filled(BevExtent::new(2, 2), 0.5);
        let r = train_on_targets(net.clone(), &[(x, target)], &TrainConfig::default()).unwrap();
        assert_eq!(r.net, net);
        assert_eq!(r.final_loss, 0.0);
    }

    #[test]
    fn divergence_reports_step() {
        let x = random_input(BevExtent::new(16, 16), 1, 40, 2);
        let target = Heatmap::filled(BevExtent::new(2, 2), f64::NAN);
        let net = PredictorNet::seeded(&[1], 0).unwrap();
        let err = train_on_targets(net, &[(x, target)], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 0, .. }));
    }

    #[test]
    fn parallel_training_matches_sequential() {
        let data: Vec<TrainSample> = (0..4)
            .map(|i| TrainSample {
                input: random_input(BevExtent::new(24, 16), 2, 80, i),
                boxes: vec![GroundTruthBox::new([5.0 + i as f64, 6.0], [2.0, 2.0], 0.3)],
            })
            .collect();
        let net = PredictorNet::seeded(&[2], 9).unwrap();
        let mut cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            exec: ExecMode::Sequential,
            ..Default::default()
        };
        let a = train_predictor(net.clone(), &data, &cfg).unwrap();
        cfg.exec = ExecMode::Parallel;
        let b = train_predictor(net, &data, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn empty_dataset() {
        let net = PredictorNet::seeded(&[1], 0).unwrap();
        assert!(matches!(train_predictor(net, &[], &TrainConfig::default()), Err(Error::EmptyBatch)));
    }
}
