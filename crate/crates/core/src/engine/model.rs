//! Backbone weights and optional normalization statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LayerSpec, PipelineConfig, SCHEMA_VERSION};
use crate::conv::KernelWeights;
use crate::error::{Error, Result};
use crate::norm::NormParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub name: String,
    pub kernel: KernelWeights,
    /// Fixed statistics; when absent they are fitted on each run's layer input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema_version: u32,
    pub layers_3d: Vec<LayerWeights>,
    pub layers_2d: Vec<LayerWeights>,
}

fn layer_seed(seed: u64, domain: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (domain << 32) ^ i as u64
}

fn seeded_layer(spec: &LayerSpec, dims: usize, seed: u64) -> Result<LayerWeights> {
    Ok(LayerWeights {
        name: spec.name.clone(),
        kernel: KernelWeights::seeded(
            dims,
            spec.kernel_size,
            spec.stride,
            spec.conv_kind,
            spec.in_channels,
            spec.out_channels,
            seed,
        )?,
        norm: None,
    })
}

impl Model {
    /// Seeded kernels for every layer of `cfg`, no fixed statistics.
    pub fn seeded(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        let layers_3d = cfg
            .layers_3d
            .iter()
            .enumerate()
            .map(|(i, l)| seeded_layer(l, 3, layer_seed(seed, 3, i)))
            .collect::<Result<_>>()?;
        let layers_2d = cfg
            .layers_2d
            .iter()
            .enumerate()
            .map(|(i, l)| seeded_layer(l, 2, layer_seed(seed, 2, i)))
            .collect::<Result<_>>()?;
        Ok(Model {
            schema_version: SCHEMA_VERSION,
            layers_3d,
            layers_2d,
        })
    }

    /// Checks that the model matches the layer structure of `cfg`.
    pub fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported model schema_version {}", self.schema_version)));
        }
        for (dims, specs, weights) in [(3, &cfg.layers_3d, &self.layers_3d), (2, &cfg.layers_2d, &self.layers_2d)] {
            if specs.len() != weights.len() {
                return Err(Error::Config(format!(
                    "model has {} {dims}D layers, config has {}",
                    weights.len(),
                    specs.len()
                )));
            }
            for (s, w) in specs.iter().zip(weights) {
                let k = &w.kernel;
                let ok = s.name == w.name
                    && k.dims() == dims
                    && k.kernel_size() == s.kernel_size
                    && k.stride() == s.stride
                    && k.kind() == s.conv_kind
                    && k.in_channels() == s.in_channels
                    && k.out_channels() == s.out_channels;
                if !ok {
                    return Err(Error::Config(format!("model layer {} does not match the config", w.name)));
                }
                if let Some(n) = &w.norm {
                    n.validate()?;
                    if n.channels() != s.in_channels || Some(n.variant) != s.norm.variant() {
                        return Err(Error::Config(format!(
                            "model layer {}: normalization does not match the config",
                            w.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}
