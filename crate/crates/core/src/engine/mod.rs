//! Pipeline assembly, synthetic scenes, configuration and reporting.

mod artifacts;
mod config;
mod model;
mod pipeline;
mod report;
mod scene;

pub use artifacts::{
    calibration_scenes, collect_sites, input_site, load_boxes, load_inputs, profile_all, run_all, training_samples,
    write_run, LoadedInput, SiteSelection,
};
pub use config::{
    default_layers_2d, default_layers_3d, Activation, InputSource, LayerSpec, NormChoice, PipelineConfig, SCHEMA_VERSION,
};
pub use model::{LayerWeights, Model};
pub use pipeline::{
    run_pipeline, site_widths, Engine, RunOptions, RunOutput, RunSummary, SiteInput, SiteRecord, SiteSummary, INPUT_SITE,
};
pub use report::{report_costs, CostReport, RatioRow};
pub use scene::{generate_scene, BoxClass, PointLabel, RandomBoxes, Scene, SceneBox, SceneSpec};
