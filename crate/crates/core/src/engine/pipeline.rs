use serde::Serialize;

use super::config::{Activation, LayerSpec, PipelineConfig};
use super::model::{LayerWeights, Model};
use crate::bev::{density_heatmap, project_3d_to_2d, BevMask, DensityHeatmap};
use crate::boxes::GroundTruthBox;
use crate::conv::{sparse_conv_bev, sparse_conv_with, ConvOptions};
use crate::cost::{CostLedger, Domain};
use crate::error::{Error, Result};
use crate::filter::{filter_2d, filter_3d, r_inbox, FilterConfig, ScoreContext, ScoreMode};
use crate::norm::{fit_stats, fit_stats_stored, normalize, normalize_stored};
use crate::predictor::{Heatmap, PredictorNet};
use crate::voxel::{voxelize, BevExtent, Coord2, Point, SparseBevTensor, SparseVoxelTensor};

/// Name of the capture site holding the projected raw voxels.
pub const INPUT_SITE: &str = "input";

/// What happened at one active filter point.
#[derive(Debug, Clone)]
pub struct SiteRecord {
    pub layer: String,
    pub domain: Domain,
    pub extent: BevExtent,
    pub rate: f64,
    /// Stored BEV pixels before filtering.
    pub pixels_before: usize,
    pub dropped: Vec<Coord2>,
    pub mask: BevMask,
    pub heatmap: Option<Heatmap>,
    pub r_inbox: Option<f64>,
}

impl SiteRecord {
    pub fn dense_rate_before(&self) -> f64 {
        self.pixels_before as f64 / self.extent.cells() as f64
    }

    pub fn dense_rate_after(&self) -> f64 {
        (self.pixels_before - self.dropped.len()) as f64 / self.extent.cells() as f64
    }
}

/// A BEV tensor as seen by the predictor at some site, with boxes scaled to
/// that site's grid.
#[derive(Debug, Clone)]
pub struct SiteInput {
    pub layer: String,
    pub input: SparseBevTensor,
    pub boxes: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub voxels: SparseVoxelTensor,
    pub bev: SparseBevTensor,
    pub ledger: CostLedger,
    pub density: DensityHeatmap,
    pub sites: Vec<SiteRecord>,
    pub captured: Vec<SiteInput>,
    /// Boxes in full-resolution BEV cells, when known.
    pub boxes: Option<Vec<GroundTruthBox>>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Records the predictor input at the raw input and every filter site.
    pub capture: bool,
    /// Replaces the configured filter.
    pub filter: Option<FilterConfig>,
}

/// A validated configuration with its weights loaded.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: PipelineConfig,
    model: Model,
    predictor: PredictorNet,
}

impl Engine {
    /// Validates `cfg` and loads or seeds the model and predictor.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let model = match &cfg.model {
            Some(p) => Model::load(p)?,
            None => Model::seeded(&cfg, cfg.seed)?,
        };
        let predictor = match &cfg.predictor {
            Some(p) => PredictorNet::load(p)?,
            None => {
                if cfg.filter.score != ScoreMode::Random && cfg.filter.score != ScoreMode::DensityOnly {
                    log::warn!("no predictor weights configured; scoring with an untrained predictor");
                }
                PredictorNet::seeded(&site_widths(&cfg), cfg.seed)?
            }
        };
        Self::with_parts(cfg, model, predictor)
    }

    pub fn with_parts(cfg: PipelineConfig, model: Model, mut predictor: PredictorNet) -> Result<Self> {
        cfg.validate()?;
        model.check(&cfg)?;
        let uses_net = matches!(cfg.filter.score, ScoreMode::PredictorDensity | ScoreMode::PredictorOnly);
        for c in site_widths(&cfg) {
            if predictor.head(c).is_none() {
                if uses_net && (cfg.filter.rate_3d() > 0.0 || cfg.filter.rate_2d() > 0.0) {
                    return Err(Error::Config(format!(
                        "predictor has no input head for {c} channels needed by a filter site"
                    )));
                }
                predictor.add_head(c, cfg.seed)?;
            }
        }
        Ok(Engine { cfg, model, predictor })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn predictor(&self) -> &PredictorNet {
        &self.predictor
    }

    pub fn run(&self, points: &[Point], boxes: Option<&[GroundTruthBox]>) -> Result<RunOutput> {
        self.run_with(points, boxes, &RunOptions::default())
    }

    pub fn run_with(&self, points: &[Point], boxes: Option<&[GroundTruthBox]>, opts: &RunOptions) -> Result<RunOutput> {
        let cfg = &self.cfg;
        let filter = opts.filter.as_ref().unwrap_or(&cfg.filter);
        filter.validate()?;
        let grid = &cfg.grid;
        let full = grid.bev_extent();
        let density = density_heatmap(points, grid, filter.pool)?;
        let mut t = voxelize(points, grid, cfg.reduce)?;
        let mut ledger = CostLedger::new();
        let mut sites = Vec::new();
        let mut captured = Vec::new();
        let scaled_boxes = |e: BevExtent| -> Option<Vec<GroundTruthBox>> {
            boxes.map(|b| {
                let f = full.w as f64 / e.w as f64;
                b.iter().map(|x| if f == 1.0 { *x } else { x.downscaled(f) }).collect()
            })
        };
        if opts.capture {
            captured.push(SiteInput {
                layer: INPUT_SITE.into(),
                input: project_3d_to_2d(&t, full)?,
                boxes: boxes.map(<[_]>::to_vec).unwrap_or_default(),
            });
        }

        let mut ext3 = grid.extent;
        for (i, (spec, w)) in cfg.layers_3d.iter().zip(&self.model.layers_3d).enumerate() {
            let cells = ext3.iter().map(|&e| e as u64).product();
            ledger.begin_layer(&spec.name, Domain::Voxel, cells).input_rows = t.len() as u64;
            let bev_ext = BevExtent::new(ext3[0], ext3[1]);
            let mut predicted = None;
            if filter.apply_layers_3d.contains(&(i + 1)) {
                if opts.capture {
                    captured.push(SiteInput {
                        layer: spec.name.clone(),
                        input: project_3d_to_2d(&t, bev_ext).map_err(|e| e.at_layer(&spec.name))?,
                        boxes: scaled_boxes(bev_ext).unwrap_or_default(),
                    });
                }
                let rate = filter.rate_3d();
                if rate > 0.0 {
                    let d = density.resampled(bev_ext);
                    let pixels_before = project_3d_to_2d(&t, bev_ext)?.len();
                    let f = filter_3d(&t, bev_ext, rate, &self.score_ctx(filter, &d, i))
                        .map_err(|e| e.at_layer(&spec.name))?;
                    if f.heatmap.is_some() {
                        predicted = Some((bev_ext, t.channels()));
                    }
                    sites.push(SiteRecord {
                        layer: spec.name.clone(),
                        domain: Domain::Voxel,
                        extent: bev_ext,
                        rate,
                        pixels_before,
                        r_inbox: scaled_boxes(bev_ext).map(|b| r_inbox(&f.dropped, &b)),
                        dropped: f.dropped,
                        mask: f.mask,
                        heatmap: f.heatmap,
                    });
                    t = f.output;
                }
            }
            t = self.layer_3d(spec, w, t, ext3, &mut ledger).map_err(|e| e.at_layer(&spec.name))?;
            if spec.stride > 1 {
                let s = spec.stride as i32;
                ext3 = ext3.map(|e| (e + s - 1) / s);
            }
            if let Some((e, c)) = predicted {
                self.predictor.record_cost(&mut ledger, &format!("{}_predictor", spec.name), e, c);
            }
        }

        let bev_ext = BevExtent::new(ext3[0], ext3[1]);
        let mut b = project_3d_to_2d(&t, bev_ext)?;
        for (i, (spec, w)) in cfg.layers_2d.iter().zip(&self.model.layers_2d).enumerate() {
            let e = b.extent();
            ledger.begin_layer(&spec.name, Domain::Bev, e.cells() as u64).input_rows = b.len() as u64;
            let mut predicted = None;
            if filter.apply_layers_2d.contains(&(i + 1)) {
                if opts.capture {
                    captured.push(SiteInput {
                        layer: spec.name.clone(),
                        input: b.clone(),
                        boxes: scaled_boxes(e).unwrap_or_default(),
                    });
                }
                let rate = filter.rate_2d();
                if rate > 0.0 {
                    let d = density.resampled(e);
                    let site = cfg.layers_3d.len() + i;
                    let f = filter_2d(&b, rate, &self.score_ctx(filter, &d, site)).map_err(|x| x.at_layer(&spec.name))?;
                    if f.heatmap.is_some() {
                        predicted = Some((e, b.channels()));
                    }
                    sites.push(SiteRecord {
                        layer: spec.name.clone(),
                        domain: Domain::Bev,
                        extent: e,
                        rate,
                        pixels_before: b.len(),
                        r_inbox: scaled_boxes(e).map(|bx| r_inbox(&f.dropped, &bx)),
                        dropped: f.dropped,
                        mask: f.mask,
                        heatmap: f.heatmap,
                    });
                    b = f.output;
                }
            }
            b = self.layer_2d(spec, w, b, &mut ledger).map_err(|x| x.at_layer(&spec.name))?;
            if let Some((e, c)) = predicted {
                self.predictor.record_cost(&mut ledger, &format!("{}_predictor", spec.name), e, c);
            }
        }
        Ok(RunOutput {
            voxels: t,
            bev: b,
            ledger,
            density,
            sites,
            captured,
            boxes: boxes.map(<[_]>::to_vec),
        })
    }

    fn score_ctx<'a>(&'a self, filter: &FilterConfig, density: &'a DensityHeatmap, site: usize) -> ScoreContext<'a> {
        ScoreContext {
            net: Some(&self.predictor),
            density,
            beta: filter.beta,
            mode: filter.score,
            seed: self.cfg.seed ^ (0xF11 + site as u64),
            exec: self.cfg.exec,
        }
    }

    fn layer_3d(
        &self,
        spec: &LayerSpec,
        w: &LayerWeights,
        t: SparseVoxelTensor,
        ext3: [i32; 3],
        ledger: &mut CostLedger,
    ) -> Result<SparseVoxelTensor> {
        ledger.current_mut().filtered_rows = t.len() as u64;
        let t = match spec.norm.variant() {
            None => t,
            Some(v) => {
                let p = match &w.norm {
                    Some(p) => p.clone(),
                    None => fit_stats_stored(&[&t], v)?,
                };
                normalize_stored(&t, &p)?
            }
        };
        let t = activate(spec.activation, t);
        ledger.current_mut().conv_input_rows = t.len() as u64;
        let s = spec.stride as i32;
        let bounds = ext3.map(|e| (e + s - 1) / s);
        sparse_conv_with(
            &t,
            &w.kernel,
            ledger,
            ConvOptions {
                exec: self.cfg.exec,
                bounds: Some(bounds),
            },
        )
    }

    fn layer_2d(&self, spec: &LayerSpec, w: &LayerWeights, b: SparseBevTensor, ledger: &mut CostLedger) -> Result<SparseBevTensor> {
        ledger.current_mut().filtered_rows = b.len() as u64;
        let b = match spec.norm.variant() {
            None => b,
            Some(v) => {
                let p = match &w.norm {
                    Some(p) => p.clone(),
                    None => fit_stats(std::slice::from_ref(&b), v)?,
                };
                normalize(&b, &p)?
            }
        };
        let b = if spec.activation == Activation::Relu {
            SparseBevTensor::new(b.extent(), activate(Activation::Relu, b.into_tensor()))?
        } else {
            b
        };
        ledger.current_mut().conv_input_rows = b.len() as u64;
        sparse_conv_bev(&b, &w.kernel, ledger, self.cfg.exec)
    }
}

fn activate<C: crate::voxel::GridCoord>(a: Activation, t: crate::voxel::SparseTensor<C>) -> crate::voxel::SparseTensor<C> {
    match a {
        Activation::None => t,
        Activation::Relu => t.map_feats(|x| x.max(0.0)),
    }
}

/// Channel widths the predictor sees: raw voxels and every filter site.
pub fn site_widths(cfg: &PipelineConfig) -> Vec<usize> {
    let mut w = vec![cfg.reduce.channels()];
    w.extend(cfg.filter.apply_layers_3d.iter().filter_map(|&i| cfg.layers_3d.get(i - 1)).map(|l| l.in_channels));
    w.extend(cfg.filter.apply_layers_2d.iter().filter_map(|&i| cfg.layers_2d.get(i - 1)).map(|l| l.in_channels));
    w.sort_unstable();
    w.dedup();
    w
}

/// Validates `cfg`, then runs it on one cloud.
pub fn run_pipeline(cfg: &PipelineConfig, cloud: &[Point]) -> Result<RunOutput> {
    Engine::new(cfg.clone())?.run(cloud, None)
}

/// Per-run summary written next to the ledger.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub voxels_in: usize,
    pub voxels_out: usize,
    pub bev_out: usize,
    pub bev_dense_rate_out: f64,
    pub flops_3d: u64,
    pub flops_2d: u64,
    pub flops_predictor: u64,
    pub activation_bytes_3d: u64,
    pub activation_bytes_2d: u64,
    pub sites: Vec<SiteSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteSummary {
    pub layer: String,
    pub domain: Domain,
    pub rate: f64,
    pub pixels_before: usize,
    pub dropped: usize,
    pub dense_rate_before: f64,
    pub dense_rate_after: f64,
    pub r_inbox: Option<f64>,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        let t3 = self.ledger.totals(Some(Domain::Voxel));
        let t2 = self.ledger.totals(Some(Domain::Bev));
        let tp = self.ledger.totals(Some(Domain::Predictor));
        RunSummary {
            voxels_in: self.ledger.entries().first().map_or(0, |e| e.input_rows as usize),
            voxels_out: self.voxels.len(),
            bev_out: self.bev.len(),
            bev_dense_rate_out: self.bev.dense_rate(),
            flops_3d: t3.flops,
            flops_2d: t2.flops,
            flops_predictor: tp.flops,
            activation_bytes_3d: t3.activation_bytes,
            activation_bytes_2d: t2.activation_bytes,
            sites: self
                .sites
                .iter()
                .map(|s| SiteSummary {
                    layer: s.layer.clone(),
                    domain: s.domain,
                    rate: s.rate,
                    pixels_before: s.pixels_before,
                    dropped: s.dropped.len(),
                    dense_rate_before: s.dense_rate_before(),
                    dense_rate_after: s.dense_rate_after(),
                    r_inbox: s.r_inbox,
                })
                .collect(),
        }
    }
}
