//! Dense grouped 2D convolution with same padding, used by the predictor.
//!
//! Activations are channel-major planes `[C][H][W]` in f64. Weights are laid
//! out `[out][in / groups][k][k]`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub groups: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of one [`Conv2d`], same layouts as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, groups: usize) -> Result<Self> {
        if groups == 0 || !in_channels.is_multiple_of(groups) || !out_channels.is_multiple_of(groups) {
            return Err(Error::Config(format!(
                "channels {in_channels}->{out_channels} not divisible by {groups} groups"
            )));
        }
        if kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {kernel_size} must be odd")));
        }
        let n = out_channels * (in_channels / groups) * kernel_size * kernel_size;
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel_size,
            groups,
            weight: vec![0.0; n],
            bias: vec![0.0; out_channels],
        })
    }

    /// Uniform init in `+-sqrt(1 / fan_in)` for weights and biases.
    pub fn seeded(in_channels: usize, out_channels: usize, kernel_size: usize, groups: usize, seed: u64) -> Result<Self> {
        let mut c = Self::zeros(in_channels, out_channels, kernel_size, groups)?;
        let bound = (1.0 / c.fan_in() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in c.weight.iter_mut().chain(c.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        Ok(c)
    }

    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel_size * self.kernel_size
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Multiply-accumulates for one forward pass over an `h x w` plane.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        (self.out_channels * self.fan_in() * h * w) as u64
    }

    pub fn zero_grad(&self) -> Conv2dGrad {
        Conv2dGrad {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize, exec: ExecMode) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_channels * h * w);
        let k = self.kernel_size;
        let p = (k / 2) as isize;
        let ipg = self.in_per_group();
        let plane = h * w;
        let planes = map_indexed(exec, self.out_channels, |o| {
            let g = o / self.out_per_group();
            let mut out = vec![self.bias[o]; plane];
            for i in 0..ipg {
                let src = &x[(g * ipg + i) * plane..][..plane];
                for ky in 0..k {
                    let dy = ky as isize - p;
                    for kx in 0..k {
                        let dx = kx as isize - p;
                        let wt = self.weight[((o * ipg + i) * k + ky) * k + kx];
                        if wt == 0.0 {
                            continue;
                        }
                        let (u0, u1) = valid_range(w, dx);
                        for v in valid_rows(h, dy) {
                            let sv = (v as isize + dy) as usize;
                            let drow = &mut out[v * w..][..w];
                            let srow = &src[sv * w..][..w];
                            for u in u0..u1 {
                                drow[u] += wt * srow[(u as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
            out
        });
        planes.concat()
    }

    /// Returns the parameter gradient and the gradient with respect to `x`.
    pub fn backward(&self, x: &[f64], dz: &[f64], h: usize, w: usize, exec: ExecMode, want_dx: bool) -> (Conv2dGrad, Vec<f64>) {
        let k = self.kernel_size;
        let p = (k / 2) as isize;
        let ipg = self.in_per_group();
        let opg = self.out_per_group();
        let plane = h * w;
        let per_out = map_indexed(exec, self.out_channels, |o| {
            let g = o / opg;
            let dzo = &dz[o * plane..][..plane];
            let db: f64 = dzo.iter().sum();
            let mut dw = vec![0.0; ipg * k * k];
            for i in 0..ipg {
                let src = &x[(g * ipg + i) * plane..][..plane];
                for ky in 0..k {
                    let dy = ky as isize - p;
                    for kx in 0..k {
                        let dx = kx as isize - p;
                        let (u0, u1) = valid_range(w, dx);
                        let mut acc = 0.0;
                        for v in valid_rows(h, dy) {
                            let sv = (v as isize + dy) as usize;
                            let drow = &dzo[v * w..][..w];
                            let srow = &src[sv * w..][..w];
                            for u in u0..u1 {
                                acc += drow[u] * srow[(u as isize + dx) as usize];
                            }
                        }
                        dw[(i * k + ky) * k + kx] = acc;
                    }
                }
            }
            (dw, db)
        });
        let mut grad = self.zero_grad();
        for (o, (dw, db)) in per_out.into_iter().enumerate() {
            grad.weight[o * ipg * k * k..][..ipg * k * k].copy_from_slice(&dw);
            grad.bias[o] = db;
        }
        if !want_dx {
            return (grad, Vec::new());
        }
        let planes = map_indexed(exec, self.in_channels, |ci| {
            let g = ci / ipg;
            let i = ci % ipg;
            let mut out = vec![0.0; plane];
            for o in g * opg..(g + 1) * opg {
                let dzo = &dz[o * plane..][..plane];
                for ky in 0..k {
                    let dy = ky as isize - p;
                    for kx in 0..k {
                        let dx = kx as isize - p;
                        let wt = self.weight[((o * ipg + i) * k + ky) * k + kx];
                        let (u0, u1) = valid_range(w, dx);
                        for v in valid_rows(h, dy) {
                            let sv = (v as isize + dy) as usize;
                            let drow = &dzo[v * w..][..w];
                            let orow = &mut out[sv * w..][..w];
                            for u in u0..u1 {
                                orow[(u as isize + dx) as usize] += wt * drow[u];
                            }
                        }
                    }
                }
            }
            out
        });
        (grad, planes.concat())
    }
}

/// Output columns `u` for which `u + d` lies inside `0..n`.
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo.min(n), hi.max(lo.min(n)))
}

fn valid_rows(n: usize, d: isize) -> std::ops::Range<usize> {
    let (a, b) = valid_range(n, d);
    a..b
}
