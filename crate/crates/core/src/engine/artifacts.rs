//! Input loading, output files and the multi-scene drivers behind the CLI.

use std::path::{Path, PathBuf};

use super::config::{InputSource, PipelineConfig};
use super::pipeline::{Engine, RunOptions, RunOutput, SiteInput, INPUT_SITE};
use super::report::{report_costs, CostReport};
use super::scene::{generate_scene, SceneBox};
use crate::bev::export::{to_csv, to_pgm};
use crate::bev::{density_heatmap, project_3d_to_2d};
use crate::boxes::GroundTruthBox;
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::filter::CalibrationScene;
use crate::predictor::{gt_heatmap, PredictorNet, TrainSample, POOL};
use crate::voxel::io::read_points;
use crate::voxel::{voxelize, Point, VoxelGridSpec};

/// One point cloud ready to run.
#[derive(Debug, Clone)]
pub struct LoadedInput {
    pub label: String,
    pub points: Vec<Point>,
    /// Boxes in full-resolution BEV cells.
    pub boxes: Option<Vec<GroundTruthBox>>,
}

pub fn load_boxes(path: &Path) -> Result<Vec<SceneBox>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Expands and loads every configured input in order.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Vec<LoadedInput>> {
    let mut out = Vec::new();
    let grid = &cfg.grid;
    let label = |n: usize| format!("scene_{n:03}");
    for input in &cfg.inputs {
        match input {
            InputSource::Cloud { path, boxes } => {
                let points = read_points(path)?;
                let boxes = match boxes {
                    Some(b) => Some(load_boxes(b)?.iter().map(|x| x.to_cells(grid)).collect()),
                    None => None,
                };
                out.push(LoadedInput { label: label(out.len()), points, boxes });
            }
            InputSource::Scene(spec) => {
                let s = generate_scene(spec)?;
                out.push(LoadedInput {
                    label: label(out.len()),
                    boxes: Some(s.gt_boxes(grid)),
                    points: s.points,
                });
            }
            InputSource::Scenes { spec, count } => {
                for i in 0..*count {
                    let mut spec = spec.clone();
                    spec.seed = spec.seed.wrapping_add(i as u64);
                    let s = generate_scene(&spec)?;
                    out.push(LoadedInput {
                        label: label(out.len()),
                        boxes: Some(s.gt_boxes(grid)),
                        points: s.points,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no inputs configured".into()));
    }
    Ok(out)
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the ledger, summary, density and per-site masks and heatmaps.
pub fn write_run(dir: &Path, out: &RunOutput, cfg: &PipelineConfig) -> Result<()> {
    create_dir(dir)?;
    write(dir.join("ledger.csv"), out.ledger.to_csv(cfg.include_rulebook))?;
    let summary = serde_json::to_string_pretty(&out.summary()).expect("summary serializes");
    write(dir.join("summary.json"), summary + "\n")?;
    let d = &out.density;
    write(dir.join("density.csv"), to_csv(&d.values, d.extent))?;
    write(dir.join("density.pgm"), to_pgm(&d.values, d.extent))?;
    if let Some(boxes) = &out.boxes {
        let e = PredictorNet::output_extent(d.extent);
        let scaled: Vec<GroundTruthBox> = boxes.iter().map(|b| b.downscaled(POOL as f64)).collect();
        let gt = gt_heatmap(&scaled, e, cfg.sigma)?;
        write(dir.join("gt_heatmap.csv"), to_csv(&gt.values, e))?;
        write(dir.join("gt_heatmap.pgm"), to_pgm(&gt.values, e))?;
    }
    for s in &out.sites {
        let m = s.mask.values();
        write(dir.join(format!("{}_mask.csv", s.layer)), to_csv(&m, s.extent))?;
        write(dir.join(format!("{}_mask.pgm", s.layer)), to_pgm(&m, s.extent))?;
        if let Some(h) = &s.heatmap {
            write(dir.join(format!("{}_heatmap.csv", s.layer)), to_csv(&h.values, h.extent))?;
            write(dir.join(format!("{}_heatmap.pgm", s.layer)), to_pgm(&h.values, h.extent))?;
        }
    }
    Ok(())
}

/// Runs every input and writes `output_dir/<label>/`.
pub fn run_all(engine: &Engine, out_dir: &Path) -> Result<Vec<(String, RunOutput)>> {
    let cfg = engine.config();
    let mut results = Vec::new();
    for input in load_inputs(cfg)? {
        let out = engine.run(&input.points, input.boxes.as_deref())?;
        write_run(&out_dir.join(&input.label), &out, cfg)?;
        log::info!("{}: {} sites, {} FLOPs", input.label, out.sites.len(), out.ledger.totals(None).flops);
        results.push((input.label, out));
    }
    Ok(results)
}

/// Runs every input with and without filtering and writes cost reports.
pub fn profile_all(engine: &Engine, out_dir: &Path) -> Result<Vec<(String, CostReport)>> {
    let cfg = engine.config();
    let baseline = Engine::with_parts(cfg.baseline(), engine.model().clone(), engine.predictor().clone())?;
    let mut reports = Vec::new();
    for input in load_inputs(cfg)? {
        let dir = out_dir.join(&input.label);
        let out = engine.run(&input.points, input.boxes.as_deref())?;
        let base = baseline.run(&input.points, input.boxes.as_deref())?;
        write_run(&dir, &out, cfg)?;
        write(dir.join("baseline_ledger.csv"), base.ledger.to_csv(cfg.include_rulebook))?;
        let report = report_costs(&out.ledger, &base.ledger)?;
        write(dir.join("report.csv"), report.to_csv())?;
        write(dir.join("report.txt"), report.to_text())?;
        reports.push((input.label, report));
    }
    Ok(reports)
}

/// Predictor input on the projected raw voxels, with boxes at full resolution.
pub fn input_site(grid: &VoxelGridSpec, cfg: &PipelineConfig, points: &[Point], boxes: &[GroundTruthBox]) -> Result<SiteInput> {
    let t = voxelize(points, grid, cfg.reduce)?;
    Ok(SiteInput {
        layer: INPUT_SITE.into(),
        input: project_3d_to_2d(&t, grid.bev_extent())?,
        boxes: boxes.to_vec(),
    })
}

/// Which predictor inputs become training samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteSelection {
    /// Only the projected raw voxels.
    InputOnly,
    /// The raw voxels and every configured filter site of an unfiltered run.
    All,
}

/// Site inputs of every input that has boxes, in input order.
pub fn collect_sites(engine: &Engine, inputs: &[LoadedInput], which: SiteSelection) -> Result<Vec<SiteInput>> {
    let cfg = engine.config();
    let per_input = map_indexed(cfg.exec, inputs.len(), |i| -> Result<Vec<SiteInput>> {
        let input = &inputs[i];
        let Some(boxes) = &input.boxes else { return Ok(Vec::new()) };
        match which {
            SiteSelection::InputOnly => Ok(vec![input_site(&cfg.grid, cfg, &input.points, boxes)?]),
            SiteSelection::All => {
                let opts = RunOptions {
                    capture: true,
                    filter: Some(cfg.filter.disabled()),
                };
                Ok(engine.run_with(&input.points, Some(boxes), &opts)?.captured)
            }
        }
    });
    let mut sites = Vec::new();
    for s in per_input {
        sites.extend(s?);
    }
    Ok(sites)
}

pub fn training_samples(sites: Vec<SiteInput>) -> Vec<TrainSample> {
    sites
        .into_iter()
        .map(|s| TrainSample {
            input: s.input,
            boxes: s.boxes,
        })
        .collect()
}

/// Site inputs paired with density aligned to each site's grid.
pub fn calibration_scenes(engine: &Engine, inputs: &[LoadedInput], which: SiteSelection) -> Result<Vec<CalibrationScene>> {
    let cfg = engine.config();
    let mut out = Vec::new();
    for input in inputs {
        let density = density_heatmap(&input.points, &cfg.grid, cfg.filter.pool)?;
        // Calibration needs no labels; treat unlabeled clouds as box-free.
        let labeled = LoadedInput {
            boxes: Some(input.boxes.clone().unwrap_or_default()),
            ..input.clone()
        };
        for s in collect_sites(engine, std::slice::from_ref(&labeled), which)? {
            out.push(CalibrationScene {
                density: density.resampled(s.input.extent()),
                input: s.input,
            });
        }
    }
    Ok(out)
}
