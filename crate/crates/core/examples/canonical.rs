//! Runs the default pipeline on the canonical synthetic scene and prints the
//! per-layer ledger and filter sites.

use std::time::Instant;

use sparsevox::engine::{generate_scene, Engine, PipelineConfig, SceneSpec};

fn main() -> sparsevox::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = PipelineConfig::default();
    let scene = generate_scene(&SceneSpec::canonical(seed))?;
    let engine = Engine::new(cfg.clone())?;
    let boxes = scene.gt_boxes(&cfg.grid);
    let start = Instant::now();
    let out = engine.run(&scene.points, Some(&boxes))?;
    println!("{} points, {:?}", scene.points.len(), start.elapsed());
    print!("{}", out.ledger.to_csv(false));
    for s in out.sites {
        println!(
            "{}: before {:.4} after {:.4} dropped {} r_inbox {:?}",
            s.layer,
            s.dense_rate_before(),
            s.dense_rate_after(),
            s.dropped.len(),
            s.r_inbox
        );
    }
    Ok(())
}
