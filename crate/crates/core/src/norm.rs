//! Batch normalization variants for sparse tensors.
//!
//! * `Normal` treats absent BEV cells as zeros, standardizes every cell and so
//!   stores the whole grid afterwards.
//! * `Nonzero` standardizes stored elements only.
//! * `Sp` divides stored elements by the standard deviation without
//!   subtracting the mean. Positive features stay positive and an absent cell
//!   stays absent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{GridCoord, SparseBevTensor, SparseTensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormVariant {
    Normal,
    Nonzero,
    Sp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub variant: NormVariant,
    pub epsilon: f64,
    pub variance: Vec<f64>,
    /// Ignored by the `Sp` variant.
    pub mean: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta_affine: Vec<f64>,
}

impl NormParams {
    /// Unit affine parameters around the given statistics.
    pub fn new(variant: NormVariant, mean: Vec<f64>, variance: Vec<f64>, epsilon: f64) -> Result<Self> {
        let c = variance.len();
        let p = NormParams {
            variant,
            epsilon,
            variance,
            mean,
            gamma: vec![1.0; c],
            beta_affine: vec![0.0; c],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.variance.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.variance.len();
        if self.mean.len() != c || self.gamma.len() != c || self.beta_affine.len() != c {
            return Err(Error::Shape(
                "normalization parameter arrays differ in length".into(),
            ));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Some(v) = self.variance.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("variance must be >= 0, got {v}")));
        }
        if self.variance.iter().any(|v| v + self.epsilon <= 0.0) {
            return Err(Error::Config(
                "variance + epsilon must be positive in every channel".into(),
            ));
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` so that `out = scale * x + shift`.
    fn affine(&self) -> Vec<(f64, f64)> {
        (0..self.channels())
            .map(|c| {
                let inv = 1.0 / (self.variance[c] + self.epsilon).sqrt();
                let scale = self.gamma[c] * inv;
                let shift = match self.variant {
                    NormVariant::Sp => self.beta_affine[c],
                    _ => self.beta_affine[c] - scale * self.mean[c],
                };
                (scale, shift)
            })
            .collect()
    }

    fn check(&self, channels: usize) -> Result<()> {
        self.validate()?;
        if channels != self.channels() {
            return Err(Error::Shape(format!(
                "tensor has {channels} channels, normalization expects {}",
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Applies a `Nonzero` or `Sp` normalization to stored elements only.
pub fn normalize_stored<C: GridCoord>(t: &SparseTensor<C>, p: &NormParams) -> Result<SparseTensor<C>> {
    p.check(t.channels())?;
    if p.variant == NormVariant::Normal {
        return Err(Error::Config(
            "the normal variant needs a bounded grid to densify; use it on BEV tensors".into(),
        ));
    }
    let aff = p.affine();
    let ch = t.channels();
    let feats = t
        .feats()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (s, b) = aff[i % ch];
            (s * x as f64 + b) as f32
        })
        .collect();
    t.with_feats(feats, ch)
}

pub fn normalize(t: &SparseBevTensor, p: &NormParams) -> Result<SparseBevTensor> {
    p.check(t.channels())?;
    match p.variant {
        NormVariant::Normal => {
            let aff = p.affine();
            let ch = t.channels();
            let dense: Vec<f32> = t
                .to_dense()
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let (s, b) = aff[i % ch];
                    (s * x as f64 + b) as f32
                })
                .collect();
            SparseBevTensor::from_dense(t.extent(), dense, ch)
        }
        _ => SparseBevTensor::new(t.extent(), normalize_stored(t.tensor(), p)?),
    }
}

/// Per-channel mean and population variance over a batch.
///
/// `Nonzero` and `Sp` use stored elements only; `Normal` uses every grid cell
/// with absent cells counted as zero.
pub fn fit_stats(batch: &[SparseBevTensor], variant: NormVariant) -> Result<NormParams> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let ch = first.channels();
    if let Some(t) = batch.iter().find(|t| t.channels() != ch) {
        return Err(Error::Shape(format!(
            "batch mixes {ch} and {} channels",
            t.channels()
        )));
    }
    let mut sum = vec![0.0f64; ch];
    let mut sq = vec![0.0f64; ch];
    let mut n = 0usize;
    for t in batch {
        for row in t.feats().chunks_exact(ch) {
            for c in 0..ch {
                let v = row[c] as f64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += match variant {
            NormVariant::Normal => t.extent().cells(),
            _ => t.len(),
        };
    }
    stats_from_moments(variant, &sum, &sq, n)
}

/// Same as [`fit_stats`] for tensors without a grid (stored elements only).
pub fn fit_stats_stored<C: GridCoord>(batch: &[&SparseTensor<C>], variant: NormVariant) -> Result<NormParams> {
    if variant == NormVariant::Normal {
        return Err(Error::Config(
            "the normal variant needs a bounded grid".into(),
        ));
    }
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let ch = first.channels();
    let mut sum = vec![0.0f64; ch];
    let mut sq = vec![0.0f64; ch];
    let mut n = 0usize;
    for t in batch {
        if t.channels() != ch {
            return Err(Error::Shape("batch mixes channel counts".into()));
        }
        for row in t.feats().chunks_exact(ch) {
            for c in 0..ch {
                let v = row[c] as f64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += t.len();
    }
    stats_from_moments(variant, &sum, &sq, n)
}

fn stats_from_moments(variant: NormVariant, sum: &[f64], sq: &[f64], n: usize) -> Result<NormParams> {
    let ch = sum.len();
    if n == 0 {
        return NormParams::new(variant, vec![0.0; ch], vec![1.0; ch], DEFAULT_EPSILON);
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let var = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / nf - m * m).max(0.0))
        .collect();
    NormParams::new(variant, mean, var, DEFAULT_EPSILON)
}
