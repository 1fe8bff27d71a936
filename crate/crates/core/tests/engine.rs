mod common;

use common::recount_pipeline_pairs;
use sparsevox::cost::{CostLedger, Domain};
use sparsevox::engine::{
    generate_scene, profile_all, run_all, Engine, InputSource, NormChoice, PipelineConfig, PointLabel, RunOutput, SceneSpec,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn canonical_run(cfg: &PipelineConfig) -> RunOutput {
    let scene = generate_scene(&SceneSpec::canonical(0)).unwrap();
    let boxes = scene.gt_boxes(&cfg.grid);
    Engine::new(cfg.clone()).unwrap().run(&scene.points, Some(&boxes)).unwrap()
}

fn with_rate(r: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.filter.drop_rate = r;
    cfg
}

#[test]
fn zero_drop_rate_equals_unfiltered_run() {
    let zero = canonical_run(&with_rate(0.0));
    let mut base_cfg = PipelineConfig::default();
    base_cfg.filter = base_cfg.filter.disabled();
    let base = canonical_run(&base_cfg);
    assert_eq!(zero.ledger, base.ledger);
    assert_eq!(zero.bev, base.bev);
    assert!(zero.sites.is_empty());
}

#[test]
fn identical_runs_are_bit_identical() {
    let cfg = PipelineConfig::default();
    let a = canonical_run(&cfg);
    let b = canonical_run(&cfg);
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.voxels, b.voxels);
    assert_eq!(a.bev, b.bev);
    assert_eq!(a.sites.len(), b.sites.len());
    for (x, y) in a.sites.iter().zip(&b.sites) {
        assert_eq!(x.dropped, y.dropped);
        assert_eq!(x.heatmap, y.heatmap);
    }
}

fn flops_3d(cfg: &PipelineConfig, pairs: &[u64]) -> u64 {
    cfg.layers_3d.iter().zip(pairs).map(|(l, p)| 2 * (l.in_channels * l.out_channels) as u64 * p).sum()
}

#[test]
fn dropping_at_3d_layers_reduces_flops_per_pair_oracle() {
    let scene = generate_scene(&SceneSpec::canonical(0)).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.filter.apply_layers_3d = vec![2, 4];
    cfg.filter.apply_layers_2d = vec![];
    cfg.filter.drop_rate = 0.25;
    let mut base_cfg = cfg.clone();
    base_cfg.filter = cfg.filter.disabled();
    let boxes = scene.gt_boxes(&cfg.grid);
    let opt = Engine::new(cfg.clone()).unwrap().run(&scene.points, Some(&boxes)).unwrap();
    let base = Engine::new(base_cfg.clone()).unwrap().run(&scene.points, Some(&boxes)).unwrap();

    let ledger_pairs = |l: &CostLedger| -> Vec<(String, u64)> {
        l.entries().iter().filter(|e| e.domain != Domain::Predictor).map(|e| (e.name.clone(), e.pairs)).collect()
    };
    let opt_all = recount_pipeline_pairs(&cfg, &opt, &scene.points);
    let base_all = recount_pipeline_pairs(&base_cfg, &base, &scene.points);
    assert_eq!(ledger_pairs(&opt.ledger), opt_all);
    assert_eq!(ledger_pairs(&base.ledger), base_all);
    let n3 = cfg.layers_3d.len();
    let opt_pairs: Vec<u64> = opt_all[..n3].iter().map(|p| p.1).collect();
    let base_pairs: Vec<u64> = base_all[..n3].iter().map(|p| p.1).collect();

    let (f_opt, f_base) = (flops_3d(&cfg, &opt_pairs), flops_3d(&cfg, &base_pairs));
    assert_eq!(opt.ledger.totals(Some(Domain::Voxel)).flops, f_opt);
    assert_eq!(base.ledger.totals(Some(Domain::Voxel)).flops, f_base);
    assert!(f_opt < f_base, "{f_opt} !< {f_base}");
}

#[test]
fn costs_never_grow_with_drop_rate() {
    let runs: Vec<CostLedger> = [0.0, 0.1, 0.25, 0.5].iter().map(|&r| canonical_run(&with_rate(r)).ledger).collect();
    let backbone = |l: &CostLedger| -> Vec<(String, u64, u64)> {
        l.entries()
            .iter()
            .filter(|e| e.domain != Domain::Predictor)
            .map(|e| (e.name.clone(), e.flops, e.activation_bytes))
            .collect()
    };
    for w in runs.windows(2) {
        for (lo, hi) in backbone(&w[0]).iter().zip(backbone(&w[1])) {
            assert_eq!(lo.0, hi.0);
            assert!(hi.1 <= lo.1, "{}: flops {} > {}", lo.0, hi.1, lo.1);
            assert!(hi.2 <= lo.2, "{}: bytes {} > {}", lo.0, hi.2, lo.2);
        }
    }
}

#[test]
fn normal_norm_makes_first_2d_input_dense() {
    let mut cfg = PipelineConfig::default();
    cfg.filter = cfg.filter.disabled();
    for l in &mut cfg.layers_2d {
        l.norm = NormChoice::Normal;
    }
    let out = canonical_run(&cfg);
    let first = out.ledger.entries().iter().find(|e| e.domain == Domain::Bev).unwrap();
    assert_eq!(first.dense_rate_conv_in(), 1.0);
    assert!(first.dense_rate_in() < 1.0);
}

#[test]
fn sp_norm_with_default_filtering_keeps_filtered_2d_layers_sparse() {
    let sp = canonical_run(&PipelineConfig::default());
    let mut normal_cfg = PipelineConfig::default();
    for l in &mut normal_cfg.layers_2d {
        l.norm = NormChoice::Normal;
    }
    let normal = canonical_run(&normal_cfg);
    for name in ["2d_conv_2", "2d_conv_4"] {
        let rate = |o: &RunOutput| o.ledger.entries().iter().find(|e| e.name == name).unwrap().dense_rate_conv_in();
        assert!(rate(&sp) < 1.0, "{name}: {}", rate(&sp));
        assert_eq!(rate(&normal), 1.0, "{name}");
    }
}

#[test]
fn predictor_cost_is_below_one_percent_of_2d_backbone() {
    let out = canonical_run(&PipelineConfig::default());
    let p = out.ledger.totals(Some(Domain::Predictor)).flops;
    let b = out.ledger.totals(Some(Domain::Bev)).flops;
    assert!(p > 0);
    assert!((p as f64) < 0.01 * b as f64, "{p} vs {b}");
}

fn parse_csv(s: &str) -> Vec<Vec<String>> {
    s.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn report_totals_equal_resummed_layer_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig {
        inputs: vec![InputSource::Scene(SceneSpec::canonical(0))],
        ..Default::default()
    };
    cfg.filter.drop_rate_2d = Some(0.5);
    let engine = Engine::new(cfg).unwrap();
    profile_all(&engine, dir.path()).unwrap();
    let run_dir = dir.path().join("scene_000");
    let ledger = parse_csv(&std::fs::read_to_string(run_dir.join("ledger.csv")).unwrap());
    let baseline = parse_csv(&std::fs::read_to_string(run_dir.join("baseline_ledger.csv")).unwrap());
    let report = parse_csv(&std::fs::read_to_string(run_dir.join("report.csv")).unwrap());
    let sum = |rows: &[Vec<String>], domain: Option<&str>, col: usize| -> u64 {
        rows.iter().filter(|r| domain.is_none_or(|d| r[1] == d)).map(|r| r[col].parse::<u64>().unwrap()).sum()
    };
    for (name, domain) in [("3d", Some("3d")), ("2d", Some("2d")), ("predictor", Some("predictor")), ("total", None)] {
        let row = report.iter().find(|r| r[0] == name && r[1] == "total").unwrap();
        let (bf, f) = (sum(&baseline, domain, 2), sum(&ledger, domain, 2));
        let (bm, m) = (sum(&baseline, domain, 3), sum(&ledger, domain, 3));
        assert_eq!(row[2].parse::<u64>().unwrap(), bf, "{name}");
        assert_eq!(row[3].parse::<u64>().unwrap(), f, "{name}");
        assert_eq!(row[5].parse::<u64>().unwrap(), bm, "{name}");
        assert_eq!(row[6].parse::<u64>().unwrap(), m, "{name}");
        if f > 0 {
            assert_eq!(row[4].parse::<f64>().unwrap(), bf as f64 / f as f64, "{name}");
        }
        if m > 0 {
            assert_eq!(row[7].parse::<f64>().unwrap(), bm as f64 / m as f64, "{name}");
        }
    }
    let total = report.iter().find(|r| r[0] == "2d").unwrap();
    assert!(total[4].parse::<f64>().unwrap() > 1.0);
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::new(PipelineConfig::default()).unwrap();
    run_all(&engine, dir.path()).unwrap();
    let d = dir.path().join("scene_000");
    for f in ["ledger.csv", "summary.json", "density.csv", "density.pgm", "gt_heatmap.csv", "gt_heatmap.pgm", "3d_conv_2_mask.pgm", "2d_conv_4_heatmap.csv"] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn uniform_clutter_fills_annuli_by_area() {
    let spec = SceneSpec {
        extent: [60.0, 60.0],
        ground_points: 0,
        clutter_points: 20000,
        radial_exponent: 0.0,
        clutter_min_range: 0.0,
        random_boxes: None,
        boxes: vec![],
        seed: 11,
        ..Default::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let r_max = 30.0;
    let bins = 10;
    let mut counts = vec![0f64; bins];
    for (p, l) in scene.points.iter().zip(&scene.labels) {
        assert_eq!(*l, PointLabel::Clutter);
        let r = (p.x as f64).hypot(p.y as f64);
        if r < r_max {
            counts[((r / r_max * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
    }
    let n: f64 = counts.iter().sum();
    let mut chi2 = 0.0;
    for (i, c) in counts.iter().enumerate() {
        let (a, b) = (i as f64 / bins as f64, (i + 1) as f64 / bins as f64);
        let expected = n * (b * b - a * a);
        chi2 += (c - expected).powi(2) / expected;
    }
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn same_seed_same_cloud() {
    let a = generate_scene(&SceneSpec::canonical(3)).unwrap();
    let b = generate_scene(&SceneSpec::canonical(3)).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.boxes, b.boxes);
}
