use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sparsevox::bev::{density_heatmap, project_3d_to_2d};
use sparsevox::engine::{
    calibration_scenes, collect_sites, generate_scene, load_inputs, profile_all, run_all, site_widths, training_samples,
    Engine, PipelineConfig, SceneSpec, SiteSelection,
};
use sparsevox::filter::calibrate_beta;
use sparsevox::predictor::{train_predictor, PredictorNet, Schedule, TrainConfig, DEFAULT_SIGMA};
use sparsevox::voxel::io::{read_points, write_points};
use sparsevox::voxel::voxelize;
use sparsevox::{Error, Result};

#[derive(Parser)]
#[command(name = "sparsevox", version, about = "Sparse voxel detection backbone with adaptive spatial filtering")]
struct Cli {
    /// Overrides the seed of the config or scene spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forces single-threaded execution.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    OneCycle,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelizes a point file and prints occupancy.
    Voxelize {
        cloud: PathBuf,
        /// Pipeline config supplying the grid; the default grid if omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Writes `x,y,z,features...` rows.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Runs the pipeline on every configured input and writes artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Runs filtered and baseline pipelines and reports cost ratios.
    Profile {
        config: PathBuf,
        /// Compares against the unfiltered baseline (always on; accepted for clarity).
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Trains the importance predictor on the configured scenes.
    TrainPredictor {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.003)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = ScheduleArg::OneCycle)]
        schedule: ScheduleArg,
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
        /// Target Gaussian width in heatmap cells.
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Trains on the raw voxel input only instead of every filter site.
        #[arg(long)]
        input_only: bool,
        /// Weights file; `<output_dir>/predictor.json` if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generates a synthetic scene as `scene.bin` and `boxes.json`.
    GenScene {
        /// Scene spec JSON; the canonical scene if omitted.
        spec: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Picks the density exponent matching predictor and density variances.
    CalibrateBeta {
        config: PathBuf,
        /// Comma-separated candidates.
        #[arg(long, value_delimiter = ',', default_values_t = default_candidates())]
        candidates: Vec<f64>,
        /// Number of inputs used.
        #[arg(long, default_value_t = 10)]
        scenes: usize,
    },
    /// Dense-rate and density-histogram report for a point file.
    Stats {
        cloud: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

fn default_candidates() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

fn load_config(path: &Path, cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.sequential {
        cfg.exec = sparsevox::ExecMode::Sequential;
    }
    Ok(cfg)
}

fn grid_config(path: Option<&Path>, cli: &Cli) -> Result<PipelineConfig> {
    match path {
        Some(p) => load_config(p, cli),
        None => Ok(PipelineConfig::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Voxelize { cloud, grid, output } => {
            let cfg = grid_config(grid.as_deref(), cli)?;
            let points = read_points(cloud)?;
            let t = voxelize(&points, &cfg.grid, cfg.reduce)?;
            println!("points {}", points.len());
            println!("voxels {}", t.len());
            println!("channels {}", t.channels());
            println!("dense_rate_3d {}", t.len() as f64 / cfg.grid.cells() as f64);
            if let Some(out) = output {
                let mut s = String::new();
                for (i, c) in t.coords().iter().enumerate() {
                    s += &format!("{},{},{}", c.x, c.y, c.z);
                    for v in t.row(i) {
                        s += &format!(",{v}");
                    }
                    s.push('\n');
                }
                std::fs::write(out, s).map_err(|e| Error::io(out, e))?;
            }
        }
        Command::Run { config, output_dir } => {
            let cfg = load_config(config, cli)?;
            let dir = output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let engine = Engine::new(cfg)?;
            for (label, out) in run_all(&engine, &dir)? {
                let t = out.ledger.totals(None);
                println!("{label}: flops {} activation_bytes {}", t.flops, t.activation_bytes);
            }
        }
        Command::Profile { config, baseline: _, output_dir } => {
            let cfg = load_config(config, cli)?;
            let dir = output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let engine = Engine::new(cfg)?;
            for (label, report) in profile_all(&engine, &dir)? {
                println!("{label}");
                print!("{}", report.to_text());
            }
        }
        Command::TrainPredictor { config, epochs, lr, schedule, batch_size, sigma, input_only, output } => {
            let cfg = load_config(config, cli)?;
            let inputs = load_inputs(&cfg)?;
            if inputs.iter().all(|i| i.boxes.is_none()) {
                return Err(Error::Config("training needs inputs with boxes".into()));
            }
            let which = if *input_only { SiteSelection::InputOnly } else { SiteSelection::All };
            let engine = Engine::new(cfg.clone())?;
            let samples = training_samples(collect_sites(&engine, &inputs, which)?);
            let net = PredictorNet::seeded(&site_widths(&cfg), cfg.seed)?;
            let tc = TrainConfig {
                epochs: *epochs,
                lr: *lr,
                schedule: match schedule {
                    ScheduleArg::Constant => Schedule::Constant,
                    ScheduleArg::OneCycle => Schedule::OneCycle,
                },
                batch_size: *batch_size,
                sigma: *sigma,
                seed: cfg.seed,
                exec: cfg.exec,
            };
            let rep = train_predictor(net, &samples, &tc)?;
            for (i, l) in rep.epoch_losses.iter().enumerate() {
                println!("epoch {} loss {l:.6}", i + 1);
            }
            println!("samples {} steps {}", samples.len(), rep.steps);
            println!("initial_loss {:.6} final_loss {:.6} reduction {:.3}", rep.initial_loss, rep.final_loss, rep.initial_loss / rep.final_loss);
            let path = output.clone().unwrap_or_else(|| cfg.output_dir.join("predictor.json"));
            if let Some(parent) = path.parent() {
                create_dir(parent)?;
            }
            rep.net.save(&path)?;
            println!("weights {}", path.display());
        }
        Command::GenScene { spec, output_dir } => {
            let mut spec = match spec {
                Some(p) => {
                    let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_str::<SceneSpec>(&s).map_err(|e| Error::Config(format!("scene spec: {e}")))?
                }
                None => SceneSpec::canonical(0),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let scene = generate_scene(&spec)?;
            create_dir(output_dir)?;
            write_points(output_dir.join("scene.bin"), &scene.points)?;
            let boxes = output_dir.join("boxes.json");
            let json = serde_json::to_string_pretty(&scene.boxes).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(&boxes, json).map_err(|e| Error::io(&boxes, e))?;
            println!("points {} boxes {}", scene.points.len(), scene.boxes.len());
        }
        Command::CalibrateBeta { config, candidates, scenes } => {
            let cfg = load_config(config, cli)?;
            let mut inputs = load_inputs(&cfg)?;
            inputs.truncate(*scenes);
            let engine = Engine::new(cfg.clone())?;
            let cal = calibration_scenes(&engine, &inputs, SiteSelection::All)?;
            let beta = calibrate_beta(&cal, engine.predictor(), candidates, cfg.exec)?;
            println!("beta {beta}");
        }
        Command::Stats { cloud, grid, bins } => {
            if *bins == 0 {
                return Err(Error::Config("bins must be positive".into()));
            }
            let cfg = grid_config(grid.as_deref(), cli)?;
            let points = read_points(cloud)?;
            let t = voxelize(&points, &cfg.grid, cfg.reduce)?;
            let bev = cfg.grid.bev_extent();
            let columns = project_3d_to_2d(&t, bev)?.len();
            println!("points {}", points.len());
            println!("voxels {}", t.len());
            println!("dense_rate_3d {}", t.len() as f64 / cfg.grid.cells() as f64);
            println!("bev_pixels {columns}");
            println!("dense_rate_bev {}", columns as f64 / bev.cells() as f64);
            let d = density_heatmap(&points, &cfg.grid, cfg.filter.pool)?;
            let mut hist = vec![0usize; *bins];
            for v in &d.values {
                hist[((v * *bins as f64) as usize).min(bins - 1)] += 1;
            }
            println!("density_histogram bin_low,bin_high,cells");
            for (i, n) in hist.iter().enumerate() {
                println!("{},{},{n}", i as f64 / *bins as f64, (i + 1) as f64 / *bins as f64);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
