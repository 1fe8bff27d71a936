//! Seeded synthetic lidar-like scenes: a ground plane, radially thinning
//! clutter and object boxes whose point counts fall off with range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::GroundTruthBox;
use crate::error::{Error, Result};
use crate::voxel::{Point, VoxelGridSpec};

/// An object box in meters; the sensor sits at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    #[serde(default)]
    pub class: String,
    /// Center of the footprint; `z` of the bottom face.
    pub center: [f64; 3],
    /// Length (along yaw), width, height.
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub points: usize,
}

impl SceneBox {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= self.size[0] / 2.0 && ly.abs() <= self.size[1] / 2.0
    }

    /// Footprint in BEV cell coordinates of `grid`.
    pub fn to_cells(&self, grid: &VoxelGridSpec) -> GroundTruthBox {
        let (u, v) = grid.bev_cell_coord(self.center[0], self.center[1]);
        GroundTruthBox::new(
            [u, v],
            [
                self.size[0] / 2.0 / grid.voxel_size[0],
                self.size[1] / 2.0 / grid.voxel_size[1],
            ],
            self.yaw,
        )
    }
}

/// Object template for randomly placed boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxClass {
    pub name: String,
    pub size: [f64; 3],
    /// Point count at `RandomBoxes::ref_range`.
    pub ref_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomBoxes {
    pub count: usize,
    pub classes: Vec<BoxClass>,
    pub min_range: f64,
    /// Maximum range as a fraction of the half-extent.
    pub max_range_frac: f64,
    pub ref_range: f64,
    pub min_points: usize,
    pub max_points: usize,
}

impl Default for RandomBoxes {
    fn default() -> Self {
        RandomBoxes {
            count: 10,
            classes: vec![
                BoxClass { name: "car".into(), size: [4.0, 1.8, 1.6], ref_points: 500 },
                BoxClass { name: "pedestrian".into(), size: [0.8, 0.8, 1.8], ref_points: 150 },
                BoxClass { name: "cyclist".into(), size: [1.8, 0.6, 1.7], ref_points: 200 },
            ],
            min_range: 5.0,
            max_range_frac: 0.9,
            ref_range: 10.0,
            min_points: 15,
            max_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Width and depth in meters, centered on the sensor.
    pub extent: [f64; 2],
    pub ground_points: usize,
    pub ground_noise: f64,
    pub clutter_points: usize,
    /// Clutter areal density falls off as `1 / r^radial_exponent`.
    pub radial_exponent: f64,
    pub clutter_min_range: f64,
    pub clutter_height: f64,
    pub boxes: Vec<SceneBox>,
    pub random_boxes: Option<RandomBoxes>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            extent: [64.0, 64.0],
            ground_points: 60_000,
            ground_noise: 0.03,
            clutter_points: 20_000,
            radial_exponent: 2.0,
            clutter_min_range: 2.0,
            clutter_height: 2.0,
            boxes: Vec::new(),
            random_boxes: None,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// The standard test scene: default clutter and ground plus ten random
    /// objects.
    pub fn canonical(seed: u64) -> Self {
        SceneSpec {
            random_boxes: Some(RandomBoxes::default()),
            seed,
            ..Default::default()
        }
    }

    /// Grid covering the scene at 0.2 m, 4 m tall, ground in the lowest layer.
    pub fn default_grid(&self) -> VoxelGridSpec {
        let vs = 0.2;
        VoxelGridSpec {
            origin: [-self.extent[0] / 2.0, -self.extent[1] / 2.0, -0.1],
            voxel_size: [vs, vs, vs],
            extent: [
                (self.extent[0] / vs).round() as i32,
                (self.extent[1] / vs).round() as i32,
                20,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.extent[0]) || !finite_pos(self.extent[1]) {
            return Err(Error::Config("scene extent must be positive".into()));
        }
        if !(self.ground_noise >= 0.0) || !(self.clutter_height >= 0.0) || !self.radial_exponent.is_finite() {
            return Err(Error::Config("scene noise, height and exponent must be finite and >= 0".into()));
        }
        if !(self.clutter_min_range >= 0.0) {
            return Err(Error::Config("clutter_min_range must be >= 0".into()));
        }
        let (hx, hy) = (self.extent[0] / 2.0, self.extent[1] / 2.0);
        for b in &self.boxes {
            if b.center[0].abs() > hx || b.center[1].abs() > hy {
                return Err(Error::Config(format!("box {:?} lies outside the scene", b.center)));
            }
            if b.size.iter().any(|s| !finite_pos(*s)) {
                return Err(Error::Config("box sizes must be positive".into()));
            }
        }
        if let Some(r) = &self.random_boxes {
            if r.count > 0 && r.classes.is_empty() {
                return Err(Error::Config("random boxes need at least one class".into()));
            }
            if !(r.min_range >= 0.0) || !(r.max_range_frac > 0.0 && r.max_range_frac <= 1.0) {
                return Err(Error::Config("random box ranges are invalid".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Ground,
    Clutter,
    Object(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<Point>,
    pub labels: Vec<PointLabel>,
    pub boxes: Vec<SceneBox>,
}

impl Scene {
    pub fn gt_boxes(&self, grid: &VoxelGridSpec) -> Vec<GroundTruthBox> {
        self.boxes.iter().map(|b| b.to_cells(grid)).collect()
    }
}

/// Samples a radius with areal density `r^-e` on `[a, b]`.
fn sample_radius(rng: &mut ChaCha8Rng, e: f64, a: f64, b: f64) -> f64 {
    let u: f64 = rng.random();
    let k = 2.0 - e;
    if k.abs() < 1e-12 {
        a * (b / a).powf(u)
    } else {
        (a.powf(k) + u * (b.powf(k) - a.powf(k))).powf(1.0 / k)
    }
}

fn place_random_boxes(spec: &SceneSpec, r: &RandomBoxes, rng: &mut ChaCha8Rng) -> Vec<SceneBox> {
    let (hx, hy) = (spec.extent[0] / 2.0, spec.extent[1] / 2.0);
    let max_range = r.max_range_frac * hx.min(hy);
    let mut out: Vec<SceneBox> = Vec::new();
    let mut attempts = 0;
    while out.len() < r.count && attempts < 1000 * r.count.max(1) {
        attempts += 1;
        let class = &r.classes[rng.random_range(0..r.classes.len())];
        let range = rng.random_range(r.min_range..max_range.max(r.min_range + 1e-9));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let yaw = rng.random_range(0.0..std::f64::consts::PI);
        let (x, y) = (range * angle.cos(), range * angle.sin());
        let radius = 0.5 * class.size[0].hypot(class.size[1]);
        if x.abs() + radius > hx || y.abs() + radius > hy {
            continue;
        }
        let clear = out.iter().all(|b| {
            let rb = 0.5 * b.size[0].hypot(b.size[1]);
            (b.center[0] - x).hypot(b.center[1] - y) > radius + rb + 0.5
        });
        if !clear {
            continue;
        }
        let scaled = class.ref_points as f64 * (r.ref_range / range).powi(2);
        let points = (scaled.round() as usize).clamp(r.min_points, r.max_points);
        out.push(SceneBox {
            class: class.name.clone(),
            center: [x, y, 0.0],
            size: class.size,
            yaw,
            points,
        });
    }
    out
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut boxes = spec.boxes.clone();
    if let Some(r) = &spec.random_boxes {
        boxes.extend(place_random_boxes(spec, r, &mut rng));
    }
    let (hx, hy) = (spec.extent[0] / 2.0, spec.extent[1] / 2.0);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    // Ground is occluded under objects.
    let mut n = 0;
    while n < spec.ground_points {
        let x = rng.random_range(-hx..hx);
        let y = rng.random_range(-hy..hy);
        let z = if spec.ground_noise > 0.0 {
            rng.random_range(-spec.ground_noise..spec.ground_noise)
        } else {
            0.0
        };
        let r = rng.random_range(0.0..1.0f64);
        n += 1;
        if boxes.iter().any(|b| b.contains_xy(x, y)) {
            continue;
        }
        points.push(Point::new(x as f32, y as f32, z as f32, r as f32));
        labels.push(PointLabel::Ground);
    }
    let r_max = hx.hypot(hy);
    let r_min = spec.clutter_min_range.min(r_max * 0.5);
    let mut placed = 0;
    while placed < spec.clutter_points {
        let rad = sample_radius(&mut rng, spec.radial_exponent, r_min.max(1e-6), r_max);
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, y) = (rad * ang.cos(), rad * ang.sin());
        if x.abs() >= hx || y.abs() >= hy {
            continue;
        }
        let z = rng.random_range(0.0..spec.clutter_height.max(1e-9));
        let r = rng.random_range(0.0..1.0f64);
        points.push(Point::new(x as f32, y as f32, z as f32, r as f32));
        labels.push(PointLabel::Clutter);
        placed += 1;
    }
    for (i, b) in boxes.iter().enumerate() {
        let (s, c) = b.yaw.sin_cos();
        for _ in 0..b.points {
            let lx = rng.random_range(-0.5..0.5) * b.size[0];
            let ly = rng.random_range(-0.5..0.5) * b.size[1];
            let z = b.center[2] + rng.random_range(0.0..1.0) * b.size[2];
            let x = b.center[0] + c * lx - s * ly;
            let y = b.center[1] + s * lx + c * ly;
            let r = rng.random_range(0.0..1.0f64);
            points.push(Point::new(x as f32, y as f32, z as f32, r as f32));
            labels.push(PointLabel::Object(i));
        }
    }
    Ok(Scene { points, labels, boxes })
}
