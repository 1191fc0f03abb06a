//! End-to-end online pipeline: source → fuse → detect → classify →
//! appearance → track, with per-stage timing.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::appearance::{multi_view_histogram, ColorHistogram, PersonCuboid, DEFAULT_BINS};
use crate::detect::{classify, Detection, Recognizer, DEFAULT_DECISION_THRESHOLD};
use crate::error::{Error, Result};
use crate::fusion::{FusedMap, Fuser, FusionMode};
use crate::geometry::{save_rig, CameraCalibration, Point2, Rig};
use crate::glimpse::{accuracy, train, FeatureSource, GlimpseClassifier, GlimpseConfig, TrainParams};
use crate::metrics::{evaluate, EvalConfig, MotReport};
use crate::occupancy::OccupancyMap;
use crate::records::{load_tracks, save_csv, DetectionRecord, TidyRecord, TrackRecord};
use crate::sim::{generate_training_set, ProposalParams, Scenario, SimFrame, Simulator};
use crate::tracker::{TrackInput, Tracker, TrackerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub mode: FusionMode,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self { mode: FusionMode::Avg }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub min_score: f64,
    pub min_separation_m: f64,
    pub decision_threshold: f64,
    /// Proposal labeling threshold I_T used when building training data.
    pub label_iou: f64,
    pub box_side: f64,
}

impl Default for DetectSection {
    fn default() -> Self {
        let p = ProposalParams::default();
        Self {
            min_score: p.min_score,
            min_separation_m: p.min_separation_m,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            label_iou: p.label_iou,
            box_side: p.box_side,
        }
    }
}

impl DetectSection {
    pub fn proposal_params(&self) -> ProposalParams {
        ProposalParams {
            min_score: self.min_score,
            min_separation_m: self.min_separation_m,
            box_side: self.box_side,
            label_iou: self.label_iou,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.proposal_params().validate()?;
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::Config("decision threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlimpseSection {
    pub history_len: usize,
    pub patch_radius: usize,
    pub dilations: Vec<usize>,
}

impl Default for GlimpseSection {
    fn default() -> Self {
        let c = GlimpseConfig::default();
        Self {
            history_len: c.history_len,
            patch_radius: c.patch_radius,
            dilations: c.dilations,
        }
    }
}

impl GlimpseSection {
    pub fn config(&self, source: FeatureSource) -> Result<GlimpseConfig> {
        let c = GlimpseConfig {
            history_len: self.history_len,
            patch_radius: self.patch_radius,
            dilations: self.dilations.clone(),
            source,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub train_fraction: f64,
    /// Training data comes from the scenario reseeded with `seed + seed_offset`.
    pub seed_offset: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainParams::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            l2: t.l2,
            train_fraction: 0.7,
            seed_offset: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppearanceSection {
    pub bins: usize,
}

impl Default for AppearanceSection {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS }
    }
}

/// Everything a run needs. Loaded from TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Builtin scenario name or scenario JSON path.
    pub scenario: Option<String>,
    /// Directory written by `mctrack simulate`, used instead of a scenario.
    pub frames_dir: Option<PathBuf>,
    /// Glimpse classifier JSON; without one every proposal is accepted.
    pub classifier: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Process only the first N frames.
    pub frames: Option<u64>,
    /// Also export coasted (unmatched) trajectory states.
    pub include_coasted: bool,
    pub fusion: FusionSection,
    pub detect: DetectSection,
    pub tracker: TrackerParams,
    pub appearance: AppearanceSection,
    pub glimpse: GlimpseSection,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut c = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative paths in the file are relative to the file
        if let Some(dir) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(q) = p {
                    if q.is_relative() {
                        *q = dir.join(&*q);
                    }
                }
            };
            fix(&mut c.frames_dir);
            fix(&mut c.classifier);
            fix(&mut c.output_dir);
            if let Some(s) = &c.scenario {
                if crate::sim::builtin(s).is_none() && Path::new(s).is_relative() {
                    c.scenario = Some(dir.join(s).to_string_lossy().into_owned());
                }
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.detect.validate()?;
        self.tracker.validate()?;
        self.eval.validate()?;
        self.glimpse.config(FeatureSource::Mean)?;
        if !(2..=256).contains(&self.appearance.bins) {
            return Err(Error::Config("appearance bins must be in 2..=256".into()));
        }
        if self.scenario.is_some() && self.frames_dir.is_some() {
            return Err(Error::Config("give either a scenario or a frames directory, not both".into()));
        }
        if !(0.0..=1.0).contains(&self.train.train_fraction) {
            return Err(Error::Config("train_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn recognizer(&self) -> Result<Recognizer> {
        match &self.classifier {
            None => Ok(Recognizer::PassThrough),
            Some(p) => Ok(Recognizer::Glimpse(GlimpseClassifier::load(p)?)),
        }
    }
}

/// Something that yields frames of per-view heatmaps in order.
pub trait FrameSource: Sync {
    fn len(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn cameras(&self) -> &[CameraCalibration];
    fn fuser(&self) -> Result<Fuser>;
    fn frame(&self, index: u64, with_rgb: bool) -> Result<SimFrame>;
}

impl FrameSource for Simulator {
    fn len(&self) -> u64 {
        self.duration()
    }
    fn cameras(&self) -> &[CameraCalibration] {
        Simulator::cameras(self)
    }
    fn fuser(&self) -> Result<Fuser> {
        Simulator::fuser(self)
    }
    fn frame(&self, index: u64, with_rgb: bool) -> Result<SimFrame> {
        self.generate_frame(index, with_rgb)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingManifest {
    pub scenario: String,
    pub frames: u64,
    pub cameras: Vec<String>,
    pub grid: crate::geometry::GroundGrid,
    pub rgb: bool,
}

/// Frames previously written by [`record`].
pub struct RecordedFrames {
    dir: PathBuf,
    manifest: RecordingManifest,
    cameras: Vec<CameraCalibration>,
    ground_truth: Vec<TrackRecord>,
}

fn heatmap_path(dir: &Path, frame: u64, view: usize) -> PathBuf {
    dir.join("heatmaps").join(format!("{frame:06}_{view}.omap"))
}

fn rgb_path(dir: &Path, frame: u64, view: usize) -> PathBuf {
    dir.join("rgb").join(format!("{frame:06}_{view}.ppm"))
}

impl RecordedFrames {
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::file(&mpath, e))?;
        let manifest: RecordingManifest = serde_json::from_str(&text)?;
        let rig = crate::geometry::load_rig(&dir.join("rig.json"))?;
        if rig.ids != manifest.cameras {
            return Err(Error::Data("rig cameras differ from the manifest".into()));
        }
        let ground_truth = load_tracks(&dir.join("ground_truth.csv"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            cameras: rig.cameras,
            ground_truth,
        })
    }

    pub fn manifest(&self) -> &RecordingManifest {
        &self.manifest
    }
}

impl FrameSource for RecordedFrames {
    fn len(&self) -> u64 {
        self.manifest.frames
    }
    fn cameras(&self) -> &[CameraCalibration] {
        &self.cameras
    }
    fn fuser(&self) -> Result<Fuser> {
        let hs = self.cameras.iter().map(|c| c.homography()).collect::<Result<Vec<_>>>()?;
        Fuser::new(hs, self.manifest.grid)
    }
    fn frame(&self, index: u64, with_rgb: bool) -> Result<SimFrame> {
        if index >= self.len() {
            return Err(Error::Data(format!("frame {index} is past the end of the recording")));
        }
        let heatmaps = (0..self.cameras.len())
            .map(|v| OccupancyMap::load(&heatmap_path(&self.dir, index, v)))
            .collect::<Result<Vec<_>>>()?;
        let rgb = if with_rgb {
            if !self.manifest.rgb {
                return Err(Error::Data("color features need RGB frames; record with --rgb".into()));
            }
            let imgs = (0..self.cameras.len())
                .map(|v| {
                    let p = rgb_path(&self.dir, index, v);
                    Ok(image::open(&p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?.to_rgb8())
                })
                .collect::<Result<Vec<RgbImage>>>()?;
            Some(imgs)
        } else {
            None
        };
        let ground_truth = self
            .ground_truth
            .iter()
            .filter(|r| r.frame == index)
            .map(|r| (r.id, Point2::new(r.x_m, r.y_m)))
            .collect();
        Ok(SimFrame {
            frame: index,
            heatmaps,
            ground_truth,
            rgb,
        })
    }
}

/// Writes a simulator run to disk: rig, heatmaps, optional RGB frames and
/// ground truth.
pub fn record(sim: &Simulator, dir: &Path, frames: u64, rgb: bool) -> Result<RecordingManifest> {
    let mk = |p: PathBuf| std::fs::create_dir_all(&p).map_err(|e| Error::file(&p, e));
    mk(dir.join("heatmaps"))?;
    if rgb {
        mk(dir.join("rgb"))?;
    }
    let ids = sim.camera_ids().to_vec();
    save_rig(
        &dir.join("rig.json"),
        &Rig {
            ids: ids.clone(),
            cameras: sim.cameras().to_vec(),
        },
    )?;
    let frames = frames.min(sim.duration());
    let mut truth = Vec::new();
    for f in 0..frames {
        let frame = sim.generate_frame(f, rgb)?;
        for (v, m) in frame.heatmaps.iter().enumerate() {
            m.save(&heatmap_path(dir, f, v))?;
        }
        if let Some(images) = &frame.rgb {
            for (v, img) in images.iter().enumerate() {
                write_ppm(&rgb_path(dir, f, v), img)?;
            }
        }
        truth.extend(ground_truth_rows(&frame));
    }
    save_csv(&dir.join("ground_truth.csv"), &truth)?;
    let manifest = RecordingManifest {
        scenario: sim.scenario().name.clone(),
        frames,
        cameras: ids,
        grid: sim.grid(),
        rgb,
    };
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::file(&mpath, e))?;
    Ok(manifest)
}

/// Binary 8-bit PPM (`P6`); the encoder's default would pick PAM.
fn write_ppm(path: &Path, img: &image::RgbImage) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn ground_truth_rows(frame: &SimFrame) -> Vec<TrackRecord> {
    frame
        .ground_truth
        .iter()
        .map(|&(id, p)| TrackRecord {
            frame: frame.frame,
            id,
            x_m: p.x,
            y_m: p.y,
            matched: 1,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Source,
    Fuse,
    Detect,
    Classify,
    Appearance,
    Track,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Source,
        Stage::Fuse,
        Stage::Detect,
        Stage::Classify,
        Stage::Appearance,
        Stage::Track,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Source => "source",
            Stage::Fuse => "fuse",
            Stage::Detect => "detect",
            Stage::Classify => "classify",
            Stage::Appearance => "appearance",
            Stage::Track => "track",
        }
    }
}

/// Per-frame stage latencies in milliseconds.
#[derive(Debug, Clone, Default)]
pub struct TimingProfile {
    samples: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub frames: usize,
    /// Frames per second over fuse..track; the source stands in for the
    /// camera network and the heatmap network.
    pub fps_pipeline: f64,
    /// Frames per second including frame generation or loading.
    pub fps_total: f64,
    pub stages: Vec<StageSummary>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

impl TimingProfile {
    pub fn push(&mut self, sample: [f64; 6]) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[[f64; 6]] {
        &self.samples
    }

    /// Summary over all frames after the first `warmup`.
    pub fn summary(&self, warmup: usize) -> TimingSummary {
        let s = &self.samples[warmup.min(self.samples.len())..];
        let stages = Stage::ALL
            .iter()
            .enumerate()
            .map(|(i, &stage)| {
                let mut v: Vec<f64> = s.iter().map(|x| x[i]).collect();
                v.sort_by(f64::total_cmp);
                StageSummary {
                    stage,
                    mean_ms: if v.is_empty() {
                        0.0
                    } else {
                        v.iter().sum::<f64>() / v.len() as f64
                    },
                    p50_ms: percentile(&v, 0.5),
                    p90_ms: percentile(&v, 0.9),
                    p99_ms: percentile(&v, 0.99),
                    max_ms: v.last().copied().unwrap_or(0.0),
                }
            })
            .collect();
        let pipeline_ms: f64 = s.iter().map(|x| x[1..].iter().sum::<f64>()).sum();
        let total_ms: f64 = s.iter().map(|x| x.iter().sum::<f64>()).sum();
        let fps = |ms: f64| if ms > 0.0 { 1000.0 * s.len() as f64 / ms } else { 0.0 };
        TimingSummary {
            frames: s.len(),
            fps_pipeline: fps(pipeline_ms),
            fps_total: fps(total_ms),
            stages,
        }
    }
}

/// Result of processing one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub proposals: usize,
    pub detections: Vec<Detection>,
    /// Appearance of each accepted detection when color is on.
    pub histograms: Vec<Option<ColorHistogram>>,
    pub tracks: Vec<TrackRecord>,
    pub timing: [f64; 6],
}

/// Stateful per-frame processor (everything after the source).
pub struct Pipeline {
    fuser: Fuser,
    mode: FusionMode,
    proposals: ProposalParams,
    recognizer: Recognizer,
    threshold: f64,
    tracker: Tracker,
    history: VecDeque<FusedMap>,
    cameras: Vec<CameraCalibration>,
    bins: usize,
    include_coasted: bool,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

impl Pipeline {
    pub fn new(config: &PipelineConfig, fuser: Fuser, cameras: Vec<CameraCalibration>, recognizer: Recognizer) -> Result<Self> {
        config.validate()?;
        if let Recognizer::Glimpse(model) = &recognizer {
            if let FeatureSource::Stacked { channels } = model.config.source {
                if config.fusion.mode != FusionMode::Stack {
                    return Err(Error::Config("classifier uses stacked features; set fusion mode to stack".into()));
                }
                if channels != fuser.cameras() {
                    return Err(Error::Config(format!(
                        "classifier was trained for {channels} cameras, rig has {}",
                        fuser.cameras()
                    )));
                }
            }
        }
        Ok(Self {
            fuser,
            mode: config.fusion.mode,
            proposals: config.detect.proposal_params(),
            recognizer,
            threshold: config.detect.decision_threshold,
            tracker: Tracker::new(config.tracker)?,
            history: VecDeque::new(),
            cameras,
            bins: config.appearance.bins,
            include_coasted: config.include_coasted,
        })
    }

    pub fn uses_color(&self) -> bool {
        self.tracker.params().use_color
    }

    pub fn process(&mut self, frame: &SimFrame, source_ms: f64) -> Result<FrameOutput> {
        let t = Instant::now();
        let fused = self.fuser.fuse(&frame.heatmaps, self.mode)?;
        if self.history.len() > self.recognizer.history_len() {
            self.history.pop_front();
        }
        self.history.push_back(fused);
        let fuse_ms = ms(t);

        let t = Instant::now();
        let current = self.history.back().expect("just pushed");
        let proposals = self.proposals.propose(current);
        let detect_ms = ms(t);

        let t = Instant::now();
        let refs: Vec<&FusedMap> = self.history.iter().collect();
        let detections = classify(&proposals, &refs, &self.recognizer, self.threshold)?;
        let classify_ms = ms(t);

        let t = Instant::now();
        let mut histograms: Vec<Option<ColorHistogram>> = vec![None; detections.len()];
        if self.uses_color() {
            let images = frame
                .rgb
                .as_ref()
                .ok_or_else(|| Error::Data("color features need RGB frames".into()))?;
            let views: Vec<(&CameraCalibration, &RgbImage)> = self.cameras.iter().zip(images).collect();
            for (d, h) in detections.iter().zip(histograms.iter_mut()) {
                if d.accepted {
                    *h = Some(multi_view_histogram(&views, &PersonCuboid::new(d.proposal.position), self.bins)?);
                }
            }
        }
        let inputs: Vec<TrackInput> = detections
            .iter()
            .zip(&histograms)
            .filter(|(d, _)| d.accepted)
            .map(|(d, h)| TrackInput {
                position: d.proposal.position,
                appearance: h.clone(),
            })
            .collect();
        let appearance_ms = ms(t);

        let t = Instant::now();
        self.tracker.step(frame.frame, &inputs)?;
        let tracks = self.tracker.rows(frame.frame, self.include_coasted);
        let track_ms = ms(t);

        Ok(FrameOutput {
            proposals: proposals.len(),
            detections,
            histograms,
            tracks,
            timing: [source_ms, fuse_ms, detect_ms, classify_ms, appearance_ms, track_ms],
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tracks: Vec<TrackRecord>,
    pub detections: Vec<DetectionRecord>,
    pub ground_truth: Vec<TrackRecord>,
    pub report: Option<MotReport>,
    pub timing: TimingProfile,
    pub tidy: Vec<TidyRecord>,
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        save_csv(&dir.join("tracks.csv"), &self.tracks)?;
        save_csv(&dir.join("detections.csv"), &self.detections)?;
        save_csv(&dir.join("ground_truth.csv"), &self.ground_truth)?;
        save_csv(&dir.join("tidy.csv"), &self.tidy)?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::file(&p, e))
        };
        if let Some(r) = &self.report {
            write("report.json", r.to_json()?)?;
            write("report.txt", r.to_string())?;
        }
        write("timing.json", serde_json::to_string_pretty(&self.timing.summary(0))?)?;
        Ok(())
    }
}

/// Opens the configured frame source.
pub fn open_source(config: &PipelineConfig) -> Result<Box<dyn FrameSource>> {
    match (&config.scenario, &config.frames_dir) {
        (Some(s), None) => Ok(Box::new(Simulator::new(Scenario::resolve(s)?)?)),
        (None, Some(dir)) => Ok(Box::new(RecordedFrames::open(dir)?)),
        (None, None) => Err(Error::Config("no scenario or frames directory given".into())),
        (Some(_), Some(_)) => Err(Error::Config("give either a scenario or a frames directory, not both".into())),
    }
}

/// Runs the configured pipeline over its source, frame by frame.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let source = open_source(config)?;
    run_on(config, source.as_ref(), config.recognizer()?)
}

pub fn run_on(config: &PipelineConfig, source: &dyn FrameSource, recognizer: Recognizer) -> Result<RunOutput> {
    let mut pipeline = Pipeline::new(config, source.fuser()?, source.cameras().to_vec(), recognizer)?;
    let frames = config.frames.map_or(source.len(), |n| n.min(source.len()));
    let color = pipeline.uses_color();
    let mut out = RunOutput {
        tracks: Vec::new(),
        detections: Vec::new(),
        ground_truth: Vec::new(),
        report: None,
        timing: TimingProfile::default(),
        tidy: Vec::new(),
    };
    for f in 0..frames {
        let t = Instant::now();
        let frame = source.frame(f, color)?;
        let source_ms = ms(t);
        let r = pipeline.process(&frame, source_ms)?;
        out.ground_truth.extend(ground_truth_rows(&frame));
        out.detections.extend(
            r.detections
                .iter()
                .zip(&r.histograms)
                .map(|(d, h)| DetectionRecord::new(f, d, h.as_ref().map(|h| h.counts.as_slice()))),
        );
        let accepted = r.detections.iter().filter(|d| d.accepted).count();
        for (metric, value) in [
            ("proposals", r.proposals as f64),
            ("accepted", accepted as f64),
            ("tracks", r.tracks.len() as f64),
            ("ground_truth", frame.ground_truth.len() as f64),
            ("latency_ms", r.timing[1..].iter().sum()),
        ] {
            out.tidy.push(TidyRecord {
                metric: metric.into(),
                frame: f,
                value,
            });
        }
        out.tracks.extend(r.tracks);
        out.timing.push(r.timing);
    }
    if !out.ground_truth.is_empty() {
        out.report = Some(evaluate(&out.ground_truth, &out.tracks, &config.eval)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub feature_length: usize,
    pub train_samples: usize,
    pub train_positives: usize,
    pub test_samples: usize,
    pub test_positives: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Builds a labeled proposal set from the (reseeded) scenario and fits a
/// glimpse classifier on its training split.
pub fn train_glimpse(config: &PipelineConfig, scenario: &Scenario, source: FeatureSource) -> Result<(GlimpseClassifier, TrainReport)> {
    config.validate()?;
    let sim = Simulator::new(scenario.with_seed(scenario.seed.wrapping_add(config.train.seed_offset)))?;
    let source = match source {
        FeatureSource::Stacked { .. } => FeatureSource::Stacked {
            channels: sim.cameras().len(),
        },
        s => s,
    };
    let gconf = config.glimpse.config(source)?;
    let set = generate_training_set(&sim, &gconf, &config.detect.proposal_params(), config.train.train_fraction)?;
    let params = TrainParams {
        epochs: config.train.epochs,
        learning_rate: config.train.learning_rate,
        l2: config.train.l2,
    };
    let outcome = train(&gconf, &set.train, &params)?;
    let threshold = config.detect.decision_threshold;
    let report = TrainReport {
        feature_length: gconf.feature_len(),
        train_samples: set.train.len(),
        train_positives: crate::sim::TrainingSet::positives(&set.train),
        test_samples: set.test.len(),
        test_positives: crate::sim::TrainingSet::positives(&set.test),
        train_accuracy: accuracy(&outcome.classifier, &set.train, threshold)?,
        test_accuracy: accuracy(&outcome.classifier, &set.test, threshold)?,
        epochs_run: outcome.losses.len() - 1,
        final_loss: *outcome.losses.last().expect("initial loss recorded"),
    };
    Ok((outcome.classifier, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRun {
    pub cameras: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub agents: usize,
    pub timing: TimingSummary,
}

/// Throughput of the scenario with its rig replaced by a ring of `n`
/// cameras for each requested count. The first `warmup` frames of every
/// run are excluded.
pub fn bench(config: &PipelineConfig, scenario: &Scenario, camera_counts: &[usize], frames: u64, warmup: u64) -> Result<Vec<BenchRun>> {
    let base_cams = scenario.cameras()?;
    let size = base_cams
        .first()
        .map(|(_, c)| c.image_size())
        .ok_or_else(|| Error::Config("bench scenario has no cameras".into()))?;
    let mut runs = Vec::new();
    for &n in camera_counts {
        if n == 0 {
            return Err(Error::Config("camera count must be positive".into()));
        }
        let mut s = scenario.clone();
        if n != base_cams.len() {
            let (w, h) = s.grid.extent();
            let center = [s.grid.origin[0] + w / 2.0, s.grid.origin[1] + h / 2.0];
            s.rig = crate::sim::RigSpec::Cameras(crate::sim::ring_rig(n, center, 8.5, 4.5, 520.0, size));
        }
        s.duration = s.duration.max(frames + warmup);
        let sim = Simulator::new(s)?;
        let cfg = PipelineConfig {
            frames: Some(frames + warmup),
            ..config.clone()
        };
        let out = run_on(&cfg, &sim, cfg.recognizer()?)?;
        runs.push(BenchRun {
            cameras: n,
            image_width: size.width,
            image_height: size.height,
            grid_rows: sim.grid().rows,
            grid_cols: sim.grid().cols,
            agents: sim.scenario().agents.len(),
            timing: out.timing.summary(warmup as usize),
        });
    }
    Ok(runs)
}

pub fn format_bench(runs: &[BenchRun]) -> String {
    let mut s = String::from("cameras  frames  fps_pipeline  fps_total");
    for st in Stage::ALL {
        s.push_str(&format!("  {:>10}", format!("{}_p50", st.name())));
    }
    s.push('\n');
    for r in runs {
        s.push_str(&format!(
            "{:>7}  {:>6}  {:>12.1}  {:>9.1}",
            r.cameras, r.timing.frames, r.timing.fps_pipeline, r.timing.fps_total
        ));
        for st in &r.timing.stages {
            s.push_str(&format!("  {:>10.3}", st.p50_ms));
        }
        s.push('\n');
    }
    s
}
