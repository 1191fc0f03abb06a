//! Synthetic multi-camera scenarios.
//!
//! Scripted agents walk waypoint polylines on the ground plane. Each view
//! gets a heatmap whose response for an agent is a soft ground disk rendered
//! through that camera's homography, blurred with camera distance, with
//! optional dropouts, single-view clutter blobs and pixel noise.
//!
//! Every random draw comes from a ChaCha8 stream seeded by
//! `splitmix64(seed, frame, view, stream)`, so any frame can be generated on
//! its own and the output does not depend on the scenario length, thread
//! count or the order frames are requested in.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appearance::{project_cuboid, PersonCuboid};
use crate::detect::{label_proposals, local_maxima, Proposal};
use crate::error::{Error, Result};
use crate::fusion::{FusedMap, Fuser, FusionMode};
use crate::geometry::{load_rig, CameraCalibration, GroundGrid, Homography, ImageSize, Point2, Vector2};
use crate::glimpse::{extract_features, FeatureSource, GlimpseConfig, Sample};
use crate::heatmap::{render_soft_disks, SoftDisk, DEFAULT_DISK_RADIUS};
use crate::occupancy::OccupancyMap;

pub const DEFAULT_MAX_SPEED: f64 = 4.0;
pub const BUILTIN_SCENARIOS: [&str; 3] = ["clean_4cam", "noisy_4cam", "bench_4cam"];

const STREAM_MISS: u64 = 1;
const STREAM_CLUTTER: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the random stream for one (frame, view, purpose).
pub fn stream_seed(seed: u64, frame: u64, view: usize, stream: u64) -> u64 {
    let mut h = splitmix64(seed);
    for v in [frame, view as u64, stream] {
        h = splitmix64(h ^ v);
    }
    h
}

fn rng_for(seed: u64, frame: u64, view: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, frame, view, stream))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub id: String,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraSpec {
    pub fn calibration(&self) -> Result<CameraCalibration> {
        CameraCalibration::look_at(
            Vector3::from(self.eye),
            Vector3::from(self.target),
            self.focal,
            ImageSize::new(self.width, self.height),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RigSpec {
    /// Rig file, relative to the scenario file.
    #[serde(rename = "file")]
    File(PathBuf),
    #[serde(rename = "cameras")]
    Cameras(Vec<CameraSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentScript {
    pub id: u64,
    pub waypoints: Vec<[f64; 2]>,
    /// Meters per second.
    pub speed: f64,
    /// Walk the closed polygon forever instead of leaving at the last point.
    #[serde(default, rename = "loop")]
    pub looped: bool,
    #[serde(default)]
    pub enter: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<u64>,
    /// Arc length already walked at `enter`, in meters.
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_color")]
    pub color: [u8; 3],
}

fn default_color() -> [u8; 3] {
    [200, 60, 60]
}

impl AgentScript {
    fn path(&self) -> Vec<Point2> {
        let mut pts: Vec<Point2> = self.waypoints.iter().map(|p| Point2::new(p[0], p[1])).collect();
        if self.looped && pts.len() > 1 {
            pts.push(pts[0]);
        }
        pts
    }

    pub fn path_length(&self) -> f64 {
        self.path().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Ground position at `frame`, or `None` when absent.
    pub fn position(&self, frame: u64, fps: f64) -> Option<Point2> {
        if frame < self.enter || self.exit.is_some_and(|e| frame >= e) {
            return None;
        }
        let path = self.path();
        if path.len() == 1 {
            return Some(path[0]);
        }
        let total = self.path_length();
        let mut s = self.offset + self.speed * (frame - self.enter) as f64 / fps;
        if self.looped {
            s = s.rem_euclid(total);
        } else if s > total {
            return None;
        }
        for w in path.windows(2) {
            let len = (w[1] - w[0]).norm();
            if s <= len {
                return Some(if len > 0.0 { w[0] + (w[1] - w[0]) * (s / len) } else { w[0] });
            }
            s -= len;
        }
        path.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub pixel_noise_sigma: f64,
    /// Per view, per agent, per frame probability of no response.
    pub miss_rate: f64,
    /// Expected new clutter blobs per view per frame.
    pub clutter_rate: f64,
    pub clutter_max_lifetime: u64,
    pub blur_with_distance: bool,
    /// Edge softness of every response, meters.
    pub blur_base: f64,
    /// Extra softness per meter of camera distance.
    pub blur_per_meter: f64,
    /// Response amplitude is `exp(-attenuation_per_meter * distance)`.
    pub attenuation_per_meter: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_noise_sigma: 0.0,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            clutter_max_lifetime: 3,
            blur_with_distance: true,
            blur_base: 0.05,
            blur_per_meter: 0.01,
            attenuation_per_meter: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("noise: {m}")));
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad("pixel_noise_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return bad("miss_rate must be in [0, 1]");
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad("clutter_rate must be >= 0");
        }
        if self.clutter_max_lifetime == 0 {
            return bad("clutter_max_lifetime must be >= 1");
        }
        if !(self.blur_base >= 0.0 && self.blur_per_meter >= 0.0 && self.attenuation_per_meter >= 0.0) {
            return bad("blur and attenuation coefficients must be >= 0");
        }
        Ok(())
    }

    fn sigma(&self, distance: f64) -> f64 {
        if self.blur_with_distance {
            self.blur_base + self.blur_per_meter * distance
        } else {
            self.blur_base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub duration: u64,
    pub seed: u64,
    pub grid: GroundGrid,
    pub rig: RigSpec,
    pub agents: Vec<AgentScript>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_radius")]
    pub disk_radius: f64,
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_fps() -> f64 {
    15.0
}
fn default_radius() -> f64 {
    DEFAULT_DISK_RADIUS
}
fn default_max_speed() -> f64 {
    DEFAULT_MAX_SPEED
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }

    /// A builtin scenario name or a path to a scenario JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match builtin(name_or_path) {
            Some(s) => Ok(s),
            None => {
                let p = Path::new(name_or_path);
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "unknown scenario {name_or_path:?}: not a builtin ({}) and no such file",
                        BUILTIN_SCENARIOS.join(", ")
                    )));
                }
                Self::load(p)
            }
        }
    }

    pub fn cameras(&self) -> Result<Vec<(String, CameraCalibration)>> {
        match &self.rig {
            RigSpec::Cameras(specs) => specs.iter().map(|c| Ok((c.id.clone(), c.calibration()?))).collect(),
            RigSpec::File(path) => {
                let path = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let rig = load_rig(&path)?;
                Ok(rig.ids.into_iter().zip(rig.cameras).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario {:?}: {m}", self.name)));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.duration == 0 {
            return bad("duration must be at least one frame".into());
        }
        if !(self.disk_radius > 0.0) {
            return bad("disk_radius must be positive".into());
        }
        self.grid.validate()?;
        self.noise.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) || a.id == 0 {
                return bad(format!("agent ids must be unique and nonzero ({})", a.id));
            }
            if a.waypoints.is_empty() {
                return bad(format!("agent {} has no waypoints", a.id));
            }
            if !(a.speed >= 0.0 && a.speed <= self.max_speed) {
                return bad(format!("agent {} speed {} exceeds the cap {}", a.id, a.speed, self.max_speed));
            }
            if a.waypoints.iter().any(|w| !self.grid.contains(&Point2::new(w[0], w[1]))) {
                return bad(format!("agent {} has a waypoint outside the grid", a.id));
            }
        }
        Ok(())
    }

    /// Same scenario cut to its first `frames` frames.
    pub fn truncated(&self, frames: u64) -> Self {
        Self {
            duration: frames.min(self.duration),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn ground_truth(&self, frame: u64) -> Vec<(u64, Point2)> {
        self.agents
            .iter()
            .filter_map(|a| a.position(frame, self.fps).map(|p| (a.id, p)))
            .collect()
    }
}

/// Ring of `n` cameras on a circle of `radius` around `center`, all aimed
/// at the center.
pub fn ring_rig(n: usize, center: [f64; 2], radius: f64, height: f64, focal: f64, size: ImageSize) -> Vec<CameraSpec> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64 + std::f64::consts::FRAC_PI_4;
            CameraSpec {
                id: format!("cam{i}"),
                eye: [center[0] + radius * a.cos(), center[1] + radius * a.sin(), height],
                target: [center[0], center[1], 0.0],
                focal,
                width: size.width,
                height: size.height,
            }
        })
        .collect()
}

fn circle(center: [f64; 2], radius: f64, sides: usize, clockwise: bool) -> Vec<[f64; 2]> {
    (0..sides)
        .map(|k| {
            let mut a = std::f64::consts::TAU * k as f64 / sides as f64;
            if clockwise {
                a = -a;
            }
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

const PALETTE: [[u8; 3]; 10] = [
    [220, 40, 40],
    [40, 160, 60],
    [40, 80, 220],
    [230, 200, 30],
    [160, 50, 200],
    [30, 200, 210],
    [240, 130, 20],
    [250, 250, 250],
    [20, 20, 20],
    [150, 90, 40],
];

fn loop_agents(first_id: u64, center: [f64; 2], radius: f64, count: usize, speed: f64, clockwise: bool) -> Vec<AgentScript> {
    let waypoints = circle(center, radius, 32, clockwise);
    let probe = AgentScript {
        id: 1,
        waypoints: waypoints.clone(),
        speed,
        looped: true,
        enter: 0,
        exit: None,
        offset: 0.0,
        color: [0; 3],
    };
    let perimeter = probe.path_length();
    (0..count)
        .map(|k| {
            let id = first_id + k as u64;
            AgentScript {
                id,
                offset: perimeter * k as f64 / count as f64,
                color: PALETTE[(id as usize - 1) % PALETTE.len()],
                ..probe.clone()
            }
        })
        .collect()
}

fn base_scenario(name: &str, agents: Vec<AgentScript>, noise: NoiseModel, duration: u64, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        fps: 15.0,
        duration,
        seed,
        grid: GroundGrid::new(Point2::origin(), GroundGrid::DEFAULT_CELL_SIZE, 400, 400).expect("valid grid"),
        rig: RigSpec::Cameras(ring_rig(4, [5.0, 5.0], 8.5, 4.5, 520.0, ImageSize::new(640, 480))),
        agents,
        noise,
        disk_radius: DEFAULT_DISK_RADIUS,
        max_speed: DEFAULT_MAX_SPEED,
        base_dir: None,
    }
}

fn six_loop_agents() -> Vec<AgentScript> {
    let mut agents = loop_agents(1, [5.0, 5.0], 3.4, 3, 1.2, false);
    agents.extend(loop_agents(4, [5.0, 5.0], 1.6, 3, 0.9, true));
    agents
}

/// Bundled scenarios.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "clean_4cam" => Some(base_scenario(name, six_loop_agents(), NoiseModel::default(), 900, 7)),
        "noisy_4cam" => {
            let mut agents = six_loop_agents();
            let walker = |id: u64, from: [f64; 2], to: [f64; 2], enter: u64| AgentScript {
                id,
                waypoints: vec![from, to],
                speed: 1.1,
                looped: false,
                enter,
                exit: None,
                offset: 0.0,
                color: PALETTE[(id as usize - 1) % PALETTE.len()],
            };
            agents.push(walker(7, [0.6, 9.4], [9.4, 9.4], 60));
            agents.push(walker(8, [9.4, 0.6], [0.6, 0.6], 300));
            agents.push(walker(9, [0.6, 0.6], [9.4, 9.4], 520));
            let noise = NoiseModel {
                pixel_noise_sigma: 0.1,
                miss_rate: 0.05,
                clutter_rate: 2.0,
                ..NoiseModel::default()
            };
            Some(base_scenario(name, agents, noise, 900, 11))
        }
        "bench_4cam" => {
            let mut agents = loop_agents(1, [5.0, 5.0], 4.2, 8, 1.3, false);
            agents.extend(loop_agents(9, [5.0, 5.0], 3.0, 6, 1.1, true));
            agents.extend(loop_agents(15, [5.0, 5.0], 1.8, 4, 1.0, false));
            agents.extend(loop_agents(19, [5.0, 5.0], 0.7, 2, 0.6, true));
            Some(base_scenario(name, agents, NoiseModel::default(), 600, 3))
        }
        _ => None,
    }
}

/// One generated time step.
#[derive(Debug, Clone)]
pub struct SimFrame {
    pub frame: u64,
    pub heatmaps: Vec<OccupancyMap>,
    pub ground_truth: Vec<(u64, Point2)>,
    pub rgb: Option<Vec<RgbImage>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterBlob {
    pub position: Point2,
    pub amplitude: f64,
    pub born: u64,
    pub lifetime: u64,
}

/// A validated scenario with its cameras resolved.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    camera_ids: Vec<String>,
    cameras: Vec<CameraCalibration>,
    homographies: Vec<Homography>,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let (camera_ids, cameras): (Vec<_>, Vec<_>) = scenario.cameras()?.into_iter().unzip();
        if cameras.is_empty() {
            return Err(Error::Config(format!("scenario {:?} has no cameras", scenario.name)));
        }
        let homographies = cameras.iter().map(|c| c.homography()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scenario,
            camera_ids,
            cameras,
            homographies,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn camera_ids(&self) -> &[String] {
        &self.camera_ids
    }

    pub fn cameras(&self) -> &[CameraCalibration] {
        &self.cameras
    }

    pub fn homographies(&self) -> &[Homography] {
        &self.homographies
    }

    pub fn grid(&self) -> GroundGrid {
        self.scenario.grid
    }

    pub fn duration(&self) -> u64 {
        self.scenario.duration
    }

    pub fn fuser(&self) -> Result<Fuser> {
        Fuser::new(self.homographies.clone(), self.scenario.grid)
    }

    /// Clutter blobs alive in `view` at `frame`.
    pub fn clutter(&self, frame: u64, view: usize) -> Vec<ClutterBlob> {
        let noise = &self.scenario.noise;
        if noise.clutter_rate <= 0.0 {
            return Vec::new();
        }
        let poisson = Poisson::new(noise.clutter_rate).expect("positive rate");
        let (w, h) = self.scenario.grid.extent();
        let origin = self.scenario.grid.origin();
        let size = self.cameras[view].image_size();
        let mut out = Vec::new();
        let first = frame.saturating_sub(noise.clutter_max_lifetime - 1);
        for born in first..=frame {
            let mut rng = rng_for(self.scenario.seed, born, view, STREAM_CLUTTER);
            let count = poisson.sample(&mut rng) as u64;
            for _ in 0..count {
                let position = origin + Vector2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
                let amplitude = rng.random_range(0.6..1.0);
                let lifetime = rng.random_range(1..=noise.clutter_max_lifetime);
                let visible = self.homographies[view]
                    .ground_to_image(&position)
                    .is_some_and(|q| size.contains(&q));
                if visible && born + lifetime > frame {
                    out.push(ClutterBlob {
                        position,
                        amplitude,
                        born,
                        lifetime,
                    });
                }
            }
        }
        out
    }

    fn soft_disk(&self, view: usize, center: Point2, amplitude: f64) -> SoftDisk {
        let noise = &self.scenario.noise;
        let d = (self.cameras[view].center() - Vector3::new(center.x, center.y, 0.0)).norm();
        SoftDisk {
            center,
            radius: self.scenario.disk_radius,
            sigma: noise.sigma(d),
            amplitude: amplitude * (-noise.attenuation_per_meter * d).exp(),
        }
    }

    fn render_view(&self, frame: u64, view: usize, truth: &[(u64, Point2)]) -> OccupancyMap {
        let noise = &self.scenario.noise;
        let size = self.cameras[view].image_size();
        let mut map = OccupancyMap::zeros_image(size);
        let mut miss_rng = rng_for(self.scenario.seed, frame, view, STREAM_MISS);
        let mut disks = Vec::with_capacity(truth.len());
        for &(_, p) in truth {
            // one draw per agent keeps streams aligned whatever the rate
            let dropped = miss_rng.random::<f64>() < noise.miss_rate;
            if !dropped {
                disks.push(self.soft_disk(view, p, 1.0));
            }
        }
        for blob in self.clutter(frame, view) {
            disks.push(self.soft_disk(view, blob.position, blob.amplitude));
        }
        render_soft_disks(&mut map, &self.homographies[view], &disks);
        if noise.pixel_noise_sigma > 0.0 {
            let normal = Normal::new(0.0, noise.pixel_noise_sigma).expect("valid sigma");
            let mut rng = rng_for(self.scenario.seed, frame, view, STREAM_NOISE);
            for v in map.values_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        map.clamp_unit();
        map
    }

    /// Flat-color agent silhouettes on a gray background, drawn far to near.
    pub fn render_rgb(&self, view: usize, truth: &[(u64, Point2)]) -> RgbImage {
        let cam = &self.cameras[view];
        let size = cam.image_size();
        let mut img = RgbImage::from_pixel(size.width as u32, size.height as u32, Rgb([128, 128, 128]));
        let mut order: Vec<(f64, usize)> = truth
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (cam.depth(&Vector3::new(p.x, p.y, 1.0)), i))
            .filter(|(d, _)| *d > 0.0)
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, i) in order {
            let (id, p) = truth[i];
            let Some(agent) = self.scenario.agents.iter().find(|a| a.id == id) else {
                continue;
            };
            let Some(b) = project_cuboid(&PersonCuboid::new(p), cam) else {
                continue;
            };
            let inset = 0.15 * (b.x1 - b.x0);
            let body = crate::appearance::ImageBox {
                x0: b.x0 + inset,
                x1: b.x1 - inset,
                ..b
            };
            if let Some((x0, y0, x1, y1)) = body.pixel_range(img.width(), img.height()) {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        img.put_pixel(x, y, Rgb(agent.color));
                    }
                }
            }
        }
        img
    }

    pub fn generate_frame(&self, frame: u64, with_rgb: bool) -> Result<SimFrame> {
        if frame >= self.scenario.duration {
            return Err(Error::Data(format!(
                "frame {frame} is past the end of scenario {:?} ({} frames)",
                self.scenario.name, self.scenario.duration
            )));
        }
        let truth = self.scenario.ground_truth(frame);
        let heatmaps = (0..self.cameras.len())
            .into_par_iter()
            .map(|v| self.render_view(frame, v, &truth))
            .collect();
        let rgb = with_rgb.then(|| {
            (0..self.cameras.len())
                .into_par_iter()
                .map(|v| self.render_rgb(v, &truth))
                .collect()
        });
        Ok(SimFrame {
            frame,
            heatmaps,
            ground_truth: truth,
            rgb,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalParams {
    pub min_score: f64,
    pub min_separation_m: f64,
    pub box_side: f64,
    pub label_iou: f64,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            min_score: crate::detect::DEFAULT_MIN_SCORE,
            min_separation_m: crate::detect::DEFAULT_MIN_SEPARATION_M,
            box_side: crate::detect::DEFAULT_BOX_SIDE,
            label_iou: crate::detect::DEFAULT_LABEL_IOU,
        }
    }
}

impl ProposalParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::Config(format!("min_score must be in [0, 1], got {}", self.min_score)));
        }
        if !(self.min_separation_m >= 0.0) || !(self.box_side > 0.0) {
            return Err(Error::Config("min_separation_m must be >= 0 and box_side > 0".into()));
        }
        if !(self.label_iou > 0.0 && self.label_iou <= 1.0) {
            return Err(Error::Config("label IoU threshold must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn propose(&self, map: &FusedMap) -> Vec<Proposal> {
        local_maxima(&map.mean, self.min_score, self.min_separation_m / map.grid().cell_size)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub config: GlimpseConfig,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl TrainingSet {
    pub fn positives(samples: &[Sample]) -> usize {
        samples.iter().filter(|s| s.positive).count()
    }
}

/// Runs fusion and proposal on every frame, labels proposals against the
/// simulator truth and extracts glimpse features. Frames before
/// `train_fraction * duration` form the training split, the rest the test
/// split.
pub fn generate_training_set(sim: &Simulator, config: &GlimpseConfig, params: &ProposalParams, train_fraction: f64) -> Result<TrainingSet> {
    config.validate()?;
    params.validate()?;
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config("train fraction must be in [0, 1]".into()));
    }
    let fuser = sim.fuser()?;
    let mode = match config.source {
        FeatureSource::Mean => FusionMode::Avg,
        FeatureSource::Stacked { channels } => {
            if channels != fuser.cameras() {
                return Err(Error::Config(format!(
                    "stacked glimpse config has {channels} channels, rig has {} cameras",
                    fuser.cameras()
                )));
            }
            FusionMode::Stack
        }
    };
    let split = (sim.duration() as f64 * train_fraction).round() as u64;
    let mut history: std::collections::VecDeque<FusedMap> = std::collections::VecDeque::new();
    let mut set = TrainingSet {
        config: config.clone(),
        train: Vec::new(),
        test: Vec::new(),
    };
    for frame in 0..sim.duration() {
        let f = sim.generate_frame(frame, false)?;
        let fused = fuser.fuse(&f.heatmaps, mode)?;
        if history.len() == config.history_len + 1 {
            history.pop_front();
        }
        history.push_back(fused);
        let current = history.back().expect("just pushed");
        let proposals = params.propose(current);
        let truth: Vec<Point2> = f.ground_truth.iter().map(|(_, p)| *p).collect();
        let labels = label_proposals(&proposals, &truth, params.box_side, params.label_iou);
        let refs: Vec<&FusedMap> = history.iter().collect();
        for (p, l) in proposals.iter().zip(labels) {
            let sample = Sample {
                features: extract_features(p, &refs, config)?,
                positive: l.positive,
                frame,
            };
            if frame < split {
                set.train.push(sample);
            } else {
                set.test.push(sample);
            }
        }
    }
    if TrainingSet::positives(&set.train) + TrainingSet::positives(&set.test) == 0 {
        return Err(Error::Data(format!(
            "scenario {:?} produced no positive proposals",
            sim.scenario().name
        )));
    }
    Ok(set)
}
