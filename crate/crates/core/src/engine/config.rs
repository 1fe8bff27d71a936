use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scene::SceneSpec;
use crate::conv::ConvKind;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::filter::FilterConfig;
use crate::norm::NormVariant;
use crate::voxel::{Reduce, VoxelGridSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    None,
    Normal,
    Nonzero,
    Sp,
}

impl NormChoice {
    pub fn variant(self) -> Option<NormVariant> {
        match self {
            NormChoice::None => None,
            NormChoice::Normal => Some(NormVariant::Normal),
            NormChoice::Nonzero => Some(NormVariant::Nonzero),
            NormChoice::Sp => Some(NormVariant::Sp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    #[default]
    Relu,
}

/// One layer: normalization, activation, then a sparse convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub conv_kind: ConvKind,
    #[serde(default)]
    pub norm: NormChoice,
    #[serde(default)]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    fn new(name: &str, k: usize, stride: usize, cin: usize, cout: usize, kind: ConvKind, norm: NormChoice, act: Activation) -> Self {
        LayerSpec {
            name: name.into(),
            kernel_size: k,
            stride,
            in_channels: cin,
            out_channels: cout,
            conv_kind: kind,
            norm,
            activation: act,
        }
    }
}

/// Where a run's point clouds come from. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    /// A raw point file, optionally with a JSON list of boxes in meters.
    Cloud {
        path: PathBuf,
        #[serde(default)]
        boxes: Option<PathBuf>,
    },
    Scene(SceneSpec),
    /// `count` scenes from `spec` with seeds `spec.seed + i`.
    Scenes { spec: SceneSpec, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub grid: VoxelGridSpec,
    pub reduce: Reduce,
    pub layers_3d: Vec<LayerSpec>,
    pub layers_2d: Vec<LayerSpec>,
    pub filter: FilterConfig,
    /// Predictor weights file.
    pub predictor: Option<PathBuf>,
    /// Backbone weights and normalization statistics.
    pub model: Option<PathBuf>,
    pub inputs: Vec<InputSource>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub exec: ExecMode,
    /// Adds the rulebook memory column to ledger CSVs.
    pub include_rulebook: bool,
    /// Gaussian width of exported target heatmaps.
    pub sigma: f64,
    /// 2D normalization of the unfiltered baseline used by `profile`.
    pub baseline_norm_2d: NormChoice,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let scene = SceneSpec::canonical(0);
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            grid: scene.default_grid(),
            reduce: Reduce::Mean,
            layers_3d: default_layers_3d(),
            layers_2d: default_layers_2d(32),
            filter: FilterConfig::default(),
            predictor: None,
            model: None,
            inputs: vec![InputSource::Scene(scene)],
            output_dir: PathBuf::from("out"),
            seed: 0,
            exec: ExecMode::default(),
            include_rulebook: false,
            sigma: crate::predictor::DEFAULT_SIGMA,
            baseline_norm_2d: NormChoice::Normal,
        }
    }
}

/// Five sparse 3D layers; the third halves the resolution.
pub fn default_layers_3d() -> Vec<LayerSpec> {
    use Activation::*;
    use ConvKind::*;
    use NormChoice as N;
    vec![
        LayerSpec::new("3d_conv_1", 3, 1, 4, 16, Submanifold, N::None, None),
        LayerSpec::new("3d_conv_2", 3, 1, 16, 16, Submanifold, N::Sp, Relu),
        LayerSpec::new("3d_conv_3", 3, 2, 16, 32, Generative, N::Sp, Relu),
        LayerSpec::new("3d_conv_4", 3, 1, 32, 32, Submanifold, N::Sp, Relu),
        LayerSpec::new("3d_conv_5", 3, 1, 32, 32, Submanifold, N::Sp, Relu),
    ]
}

/// Six generative 2D convolutions followed by a 1x1 output layer.
pub fn default_layers_2d(width: usize) -> Vec<LayerSpec> {
    let mut v: Vec<LayerSpec> = (1..=6)
        .map(|i| {
            let cin = if i == 1 { 32 } else { width };
            LayerSpec::new(&format!("2d_conv_{i}"), 3, 1, cin, width, ConvKind::Generative, NormChoice::Sp, Activation::Relu)
        })
        .collect();
    v.push(LayerSpec::new(
        "2d_deconv_1",
        1,
        1,
        width,
        width,
        ConvKind::Generative,
        NormChoice::Sp,
        Activation::Relu,
    ));
    v
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&s)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = &mut self.predictor {
            fix(p);
        }
        if let Some(p) = &mut self.model {
            fix(p);
        }
        fix(&mut self.output_dir);
        for input in &mut self.inputs {
            if let InputSource::Cloud { path, boxes } = input {
                fix(path);
                if let Some(b) = boxes {
                    fix(b);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.grid.validate()?;
        self.filter.validate()?;
        if self.layers_3d.is_empty() {
            return Err(Error::Config("at least one 3D layer is required".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        let mut width = self.reduce.channels();
        for (domain, layers) in [("3D", &self.layers_3d), ("2D", &self.layers_2d)] {
            for l in layers.iter() {
                if l.in_channels != width {
                    return Err(Error::Config(format!(
                        "{domain} layer {} expects {} input channels but receives {width}",
                        l.name, l.in_channels
                    )));
                }
                if l.kernel_size == 0 || l.kernel_size % 2 == 0 || l.stride == 0 || l.out_channels == 0 {
                    return Err(Error::Config(format!(
                        "layer {}: kernel size must be odd and stride and channels positive",
                        l.name
                    )));
                }
                if l.conv_kind == ConvKind::Submanifold && l.stride != 1 {
                    return Err(Error::Config(format!("layer {}: submanifold layers need stride 1", l.name)));
                }
                if domain == "3D" && l.norm == NormChoice::Normal {
                    return Err(Error::Config(format!(
                        "layer {}: the normal variant densifies and is only available on 2D layers",
                        l.name
                    )));
                }
                width = l.out_channels;
            }
        }
        let mut names: Vec<&str> = self.layers_3d.iter().chain(&self.layers_2d).map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("layer names must be unique".into()));
        }
        for (what, idx, n) in [
            ("3D", &self.filter.apply_layers_3d, self.layers_3d.len()),
            ("2D", &self.filter.apply_layers_2d, self.layers_2d.len()),
        ] {
            if let Some(bad) = idx.iter().find(|&&i| i == 0 || i > n) {
                return Err(Error::Config(format!(
                    "{what} filter layer {bad} does not exist ({n} layers, 1-based)"
                )));
            }
        }
        for input in &self.inputs {
            match input {
                InputSource::Scene(s) => s.validate()?,
                InputSource::Scenes { spec, .. } => spec.validate()?,
                InputSource::Cloud { .. } => {}
            }
        }
        Ok(())
    }

    /// The unfiltered reference configuration compared against by `profile`.
    pub fn baseline(&self) -> PipelineConfig {
        let mut b = self.clone();
        b.filter = self.filter.disabled();
        for l in &mut b.layers_2d {
            if l.norm != NormChoice::None {
                l.norm = self.baseline_norm_2d;
            }
        }
        b
    }
}
