use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    /// Output coordinates equal input coordinates.
    Submanifold,
    /// Output coordinates grow to every site reachable through a kernel offset.
    Generative,
}

/// Weights of a sparse convolution: one `C_in x C_out` matrix per kernel
/// offset.
///
/// Offsets enumerate `{-K/2 ..= K/2}^D` row-major, first axis slowest. The
/// convolution is a cross-correlation: output `q` reads input `stride*q + delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct KernelWeights {
    dims: usize,
    kernel_size: usize,
    stride: usize,
    kind: ConvKind,
    in_channels: usize,
    out_channels: usize,
    offsets: Vec<[i32; 3]>,
    weights: Vec<f32>,
}

/// Enumerates kernel offsets for a `dims`-dimensional kernel of odd size `k`.
pub fn kernel_offsets(dims: usize, k: usize) -> Vec<[i32; 3]> {
    let r = (k / 2) as i32;
    let span: Vec<i32> = (-r..=r).collect();
    let mut out = Vec::with_capacity(k.pow(dims as u32));
    match dims {
        2 => {
            for &a in &span {
                for &b in &span {
                    out.push([a, b, 0]);
                }
            }
        }
        _ => {
            for &a in &span {
                for &b in &span {
                    for &c in &span {
                        out.push([a, b, c]);
                    }
                }
            }
        }
    }
    out
}

impl KernelWeights {
    pub fn new(
        dims: usize,
        kernel_size: usize,
        stride: usize,
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f32>,
    ) -> Result<Self> {
        if dims != 2 && dims != 3 {
            return Err(Error::Config(format!("kernel dims must be 2 or 3, got {dims}")));
        }
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel size must be odd and positive, got {kernel_size}"
            )));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if kind == ConvKind::Submanifold && stride != 1 {
            return Err(Error::Config(format!(
                "submanifold convolution requires stride 1, got {stride}"
            )));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        let offsets = kernel_offsets(dims, kernel_size);
        let expected = offsets.len() * in_channels * out_channels;
        if weights.len() != expected {
            return Err(Error::Shape(format!(
                "kernel expects {expected} weights, got {}",
                weights.len()
            )));
        }
        Ok(KernelWeights {
            dims,
            kernel_size,
            stride,
            kind,
            in_channels,
            out_channels,
            offsets,
            weights,
        })
    }

    pub fn zeros(dims: usize, k: usize, stride: usize, kind: ConvKind, c_in: usize, c_out: usize) -> Result<Self> {
        let n = k.pow(dims as u32) * c_in * c_out;
        Self::new(dims, k, stride, kind, c_in, c_out, vec![0.0; n])
    }

    /// Uniform in `±sqrt(1 / fan_in)`, `fan_in = K^D * C_in`.
    pub fn seeded(dims: usize, k: usize, stride: usize, kind: ConvKind, c_in: usize, c_out: usize, seed: u64) -> Result<Self> {
        let mut kw = Self::zeros(dims, k, stride, kind, c_in, c_out)?;
        let bound = (1.0 / (kw.offsets.len() * c_in) as f64).sqrt() as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in kw.weights.iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        Ok(kw)
    }

    /// `K = 1` kernel whose single matrix is the identity.
    pub fn identity(dims: usize, channels: usize) -> Self {
        let mut w = vec![0.0; channels * channels];
        for c in 0..channels {
            w[c * channels + c] = 1.0;
        }
        Self::new(dims, 1, 1, ConvKind::Submanifold, channels, channels, w)
            .expect("identity kernel is well formed")
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn offsets(&self) -> &[[i32; 3]] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    /// The `C_in x C_out` row-major matrix of offset `k`.
    pub fn matrix(&self, k: usize) -> &[f32] {
        let sz = self.in_channels * self.out_channels;
        &self.weights[k * sz..(k + 1) * sz]
    }

    #[inline]
    pub fn weight(&self, k: usize, c_in: usize, c_out: usize) -> f32 {
        self.weights[(k * self.in_channels + c_in) * self.out_channels + c_out]
    }

    /// Index of the zero offset.
    pub fn center(&self) -> usize {
        self.offsets.len() / 2
    }
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    dims: usize,
    kernel_size: usize,
    stride: usize,
    conv_kind: ConvKind,
    in_channels: usize,
    out_channels: usize,
    /// `[offset][c_in][c_out]`
    weights: Vec<Vec<Vec<f32>>>,
}

impl TryFrom<KernelRepr> for KernelWeights {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        let n_off = r.kernel_size.pow(r.dims as u32);
        if r.weights.len() != n_off {
            return Err(Error::Shape(format!(
                "kernel lists {} offsets, expected {n_off}",
                r.weights.len()
            )));
        }
        let mut flat = Vec::with_capacity(n_off * r.in_channels * r.out_channels);
        for m in &r.weights {
            if m.len() != r.in_channels || m.iter().any(|row| row.len() != r.out_channels) {
                return Err(Error::Shape(format!(
                    "kernel matrix is not {} x {}",
                    r.in_channels, r.out_channels
                )));
            }
            for row in m {
                flat.extend_from_slice(row);
            }
        }
        KernelWeights::new(
            r.dims,
            r.kernel_size,
            r.stride,
            r.conv_kind,
            r.in_channels,
            r.out_channels,
            flat,
        )
    }
}

impl From<KernelWeights> for KernelRepr {
    fn from(k: KernelWeights) -> Self {
        let weights = (0..k.offsets.len())
            .map(|o| {
                k.matrix(o)
                    .chunks(k.out_channels)
                    .map(|row| row.to_vec())
                    .collect()
            })
            .collect();
        KernelRepr {
            dims: k.dims,
            kernel_size: k.kernel_size,
            stride: k.stride,
            conv_kind: k.kind,
            in_channels: k.in_channels,
            out_channels: k.out_channels,
            weights,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_row_major() {
        let o = kernel_offsets(3, 3);
        assert_eq!(o.len(), 27);
        assert_eq!(o[0], [-1, -1, -1]);
        assert_eq!(o[1], [-1, -1, 0]);
        assert_eq!(o[13], [0, 0, 0]);
        assert_eq!(o[26], [1, 1, 1]);
        let o2 = kernel_offsets(2, 3);
        assert_eq!(o2.len(), 9);
        assert_eq!(o2[4], [0, 0, 0]);
        assert_eq!(kernel_offsets(3, 1), vec![[0, 0, 0]]);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            KernelWeights::zeros(3, 3, 2, ConvKind::Submanifold, 1, 1),
            Err(Error::Config(_))
        ));
        assert!(KernelWeights::zeros(3, 2, 1, ConvKind::Generative, 1, 1).is_err());
        assert!(KernelWeights::new(2, 3, 1, ConvKind::Generative, 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn json_is_offset_major_and_round_trips() {
        let k = KernelWeights::seeded(2, 3, 1, ConvKind::Generative, 2, 3, 5).unwrap();
        let v = serde_json::to_value(&k).unwrap();
        assert_eq!(v["conv_kind"], "generative");
        assert_eq!(v["weights"].as_array().unwrap().len(), 9);
        assert_eq!(v["weights"][0].as_array().unwrap().len(), 2);
        assert_eq!(v["weights"][0][0].as_array().unwrap().len(), 3);
        let back: KernelWeights = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(back, k);
        let mut bad = v;
        bad["in_channels"] = 3.into();
        assert!(serde_json::from_value::<KernelWeights>(bad).is_err());
    }
}
