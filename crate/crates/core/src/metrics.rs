//! CLEAR-MOT and identity metrics on the ground plane.
//!
//! Ground-truth and hypothesis positions become fixed-size squares; pairs
//! with IoU below the threshold never match. Per-frame matching continues
//! the most recent pairing of each object first, then solves the remaining
//! pairs for maximum cardinality and minimum total distance `1 - IoU`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::square_iou;
use crate::error::{Error, Result};
use crate::flow::MinCostFlow;
use crate::geometry::Point2;
use crate::records::TrackRecord;

/// Distance quantization for the per-frame assignment.
const DIST_SCALE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub box_side: f64,
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            box_side: 1.0,
            iou_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.box_side > 0.0 && self.box_side.is_finite()) {
            return Err(Error::Config(format!("box side must be positive, got {}", self.box_side)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    /// `1 - IoU` when the pair may match.
    pub fn distance(&self, a: &Point2, b: &Point2) -> Option<f64> {
        let d = 1.0 - square_iou(a, b, self.box_side);
        (d <= 1.0 - self.iou_threshold).then_some(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Labeled {
    pub id: u64,
    pub position: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMatch {
    pub object: u64,
    pub hypothesis: u64,
    pub distance: f64,
    pub switch: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameCorrespondence {
    pub matches: Vec<FrameMatch>,
    pub misses: Vec<u64>,
    pub false_positives: Vec<u64>,
    /// Every (object, hypothesis) pair within the IoU threshold.
    pub valid_pairs: Vec<(u64, u64)>,
}

fn check_unique(items: &[Labeled], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it.id) {
            return Err(Error::Data(format!("duplicate {what} id {} within one frame", it.id)));
        }
    }
    Ok(())
}

/// Max-cardinality, min-distance assignment; `dist[i][j] = None` forbids a pair.
fn assign(dist: &[Vec<Option<f64>>], cols: usize) -> Vec<(usize, usize)> {
    let rows = dist.len();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let mut g = MinCostFlow::new(2 + rows + cols);
    let mut edges = Vec::new();
    for (i, row) in dist.iter().enumerate() {
        g.add_edge(0, 2 + i, 1, 0);
        for (j, d) in row.iter().enumerate() {
            if let Some(d) = d {
                edges.push((i, j, g.add_edge(2 + i, 2 + rows + j, 1, (d * DIST_SCALE).round() as i64)));
            }
        }
    }
    for j in 0..cols {
        g.add_edge(2 + rows + j, 1, 1, 0);
    }
    g.solve(0, 1, None);
    edges
        .into_iter()
        .filter(|&(_, _, e)| g.flow(e) > 0)
        .map(|(i, j, _)| (i, j))
        .collect()
}

/// Matches one frame given each object's most recent hypothesis.
pub fn match_frame(gt: &[Labeled], pred: &[Labeled], config: &EvalConfig, prior: &HashMap<u64, u64>) -> Result<FrameCorrespondence> {
    check_unique(gt, "ground-truth")?;
    check_unique(pred, "hypothesis")?;
    let dist: Vec<Vec<Option<f64>>> = gt
        .iter()
        .map(|o| pred.iter().map(|h| config.distance(&o.position, &h.position)).collect())
        .collect();
    let mut out = FrameCorrespondence::default();
    for (i, row) in dist.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            if d.is_some() {
                out.valid_pairs.push((gt[i].id, pred[j].id));
            }
        }
    }
    let mut gt_done = vec![false; gt.len()];
    let mut pred_done = vec![false; pred.len()];
    // 1. continue established pairings
    for (i, o) in gt.iter().enumerate() {
        let Some(&h) = prior.get(&o.id) else { continue };
        let Some(j) = pred.iter().position(|p| p.id == h) else { continue };
        if pred_done[j] {
            continue;
        }
        if let Some(d) = dist[i][j] {
            gt_done[i] = true;
            pred_done[j] = true;
            out.matches.push(FrameMatch {
                object: o.id,
                hypothesis: h,
                distance: d,
                switch: false,
            });
        }
    }
    // 2. optimal assignment over the rest
    let masked: Vec<Vec<Option<f64>>> = dist
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &d)| if gt_done[i] || pred_done[j] { None } else { d })
                .collect()
        })
        .collect();
    for (i, j) in assign(&masked, pred.len()) {
        let (o, h) = (gt[i].id, pred[j].id);
        gt_done[i] = true;
        pred_done[j] = true;
        out.matches.push(FrameMatch {
            object: o,
            hypothesis: h,
            distance: dist[i][j].expect("assigned pair is valid"),
            switch: prior.get(&o).is_some_and(|&prev| prev != h),
        });
    }
    out.misses = gt.iter().zip(&gt_done).filter(|(_, &d)| !d).map(|(o, _)| o.id).collect();
    out.false_positives = pred.iter().zip(&pred_done).filter(|(_, &d)| !d).map(|(h, _)| h.id).collect();
    Ok(out)
}

#[derive(Debug, Clone, Default)]
struct ObjectStats {
    frames: u64,
    /// Miss flag per frame present, in frame order.
    missed: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct MotAccumulator {
    config: EvalConfig,
    last_pairing: HashMap<u64, u64>,
    objects: BTreeMap<u64, ObjectStats>,
    hyp_frames: BTreeMap<u64, u64>,
    pair_overlap: HashMap<(u64, u64), u64>,
    matches: u64,
    switches: u64,
    misses: u64,
    false_positives: u64,
    distance_sum: f64,
    last_frame: Option<u64>,
}

impl MotAccumulator {
    pub fn new(config: EvalConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            last_pairing: HashMap::new(),
            objects: BTreeMap::new(),
            hyp_frames: BTreeMap::new(),
            pair_overlap: HashMap::new(),
            matches: 0,
            switches: 0,
            misses: 0,
            false_positives: 0,
            distance_sum: 0.0,
            last_frame: None,
        })
    }

    /// Frames must arrive in increasing order; gaps are allowed.
    pub fn update(&mut self, frame: u64, gt: &[Labeled], pred: &[Labeled]) -> Result<FrameCorrespondence> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::Data(format!("frame {frame} after frame {last}")));
            }
        }
        self.last_frame = Some(frame);
        let c = match_frame(gt, pred, &self.config, &self.last_pairing)?;
        for m in &c.matches {
            self.last_pairing.insert(m.object, m.hypothesis);
            self.distance_sum += m.distance;
            if m.switch {
                self.switches += 1;
            } else {
                self.matches += 1;
            }
        }
        self.misses += c.misses.len() as u64;
        self.false_positives += c.false_positives.len() as u64;
        let missed: BTreeSet<u64> = c.misses.iter().copied().collect();
        for o in gt {
            let s = self.objects.entry(o.id).or_default();
            s.frames += 1;
            s.missed.push(missed.contains(&o.id));
        }
        for h in pred {
            *self.hyp_frames.entry(h.id).or_default() += 1;
        }
        for &pair in &c.valid_pairs {
            *self.pair_overlap.entry(pair).or_default() += 1;
        }
        Ok(c)
    }

    /// Largest total co-occurrence over one-to-one id mappings.
    fn identity_true_positives(&self) -> u64 {
        let oids: Vec<u64> = self.objects.keys().copied().collect();
        let hids: Vec<u64> = self.hyp_frames.keys().copied().collect();
        let o_idx: HashMap<u64, usize> = oids.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        let h_idx: HashMap<u64, usize> = hids.iter().enumerate().map(|(i, &h)| (h, i)).collect();
        let (no, nh) = (oids.len(), hids.len());
        let mut g = MinCostFlow::new(2 + no + nh);
        for i in 0..no {
            g.add_edge(0, 2 + i, 1, 0);
            g.add_edge(2 + i, 1, 1, 0);
        }
        for j in 0..nh {
            g.add_edge(2 + no + j, 1, 1, 0);
        }
        let mut pairs: Vec<_> = self.pair_overlap.iter().collect();
        pairs.sort_unstable();
        for (&(o, h), &tp) in pairs {
            g.add_edge(2 + o_idx[&o], 2 + no + h_idx[&h], 1, -(tp as i64));
        }
        (-g.solve(0, 1, None).cost) as u64
    }

    pub fn report(&self) -> Result<MotReport> {
        let num_objects: u64 = self.objects.values().map(|s| s.frames).sum();
        if num_objects == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        let num_predictions: u64 = self.hyp_frames.values().sum();
        let idtp = self.identity_true_positives();
        let pct = |num: f64, den: f64| if den > 0.0 { 100.0 * num / den } else { 0.0 };
        let idp = pct(idtp as f64, num_predictions as f64);
        let idr = pct(idtp as f64, num_objects as f64);
        let idf1 = pct(2.0 * idtp as f64, (num_objects + num_predictions) as f64);
        let unique = self.objects.len() as f64;
        let (mut mt, mut ml, mut fm) = (0u64, 0u64, 0u64);
        for s in self.objects.values() {
            let tracked = s.missed.iter().filter(|&&m| !m).count() as f64;
            let ratio = tracked / s.frames as f64;
            if ratio >= 0.8 {
                mt += 1;
            }
            if ratio < 0.2 {
                ml += 1;
            }
            if let (Some(first), Some(last)) = (s.missed.iter().position(|&m| !m), s.missed.iter().rposition(|&m| !m)) {
                fm += s.missed[first..=last].windows(2).filter(|w| !w[0] && w[1]).count() as u64;
            }
        }
        let detections = self.matches + self.switches;
        Ok(MotReport {
            idf1,
            idp,
            idr,
            mt: pct(mt as f64, unique),
            ml: pct(ml as f64, unique),
            fp: self.false_positives,
            fn_: self.misses,
            ids: self.switches,
            fm,
            mota: 100.0 * (1.0 - (self.misses + self.switches + self.false_positives) as f64 / num_objects as f64),
            motp: if detections > 0 {
                100.0 * (1.0 - self.distance_sum / detections as f64)
            } else {
                0.0
            },
            num_objects,
            num_predictions,
            num_unique_objects: self.objects.len() as u64,
            idtp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub mt: f64,
    pub ml: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ids: u64,
    pub fm: u64,
    pub mota: f64,
    pub motp: f64,
    pub num_objects: u64,
    pub num_predictions: u64,
    pub num_unique_objects: u64,
    pub idtp: u64,
}

impl MotReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// (name, value) pairs in table order.
    pub fn columns(&self) -> [(&'static str, f64); 11] {
        [
            ("IDF1", self.idf1),
            ("IDP", self.idp),
            ("IDR", self.idr),
            ("MT", self.mt),
            ("ML", self.ml),
            ("FP", self.fp as f64),
            ("FN", self.fn_ as f64),
            ("IDS", self.ids as f64),
            ("FM", self.fm as f64),
            ("MOTA", self.mota),
            ("MOTP", self.motp),
        ]
    }
}

/// Aligned text table with one row per named report.
pub fn format_table(rows: &[(&str, &MotReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<name_w$}", "Method");
    for (h, _) in MotReport::columns(&MotReport::default()) {
        out.push_str(&format!(" {h:>7}"));
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for (h, v) in r.columns() {
            match h {
                "FP" | "FN" | "IDS" | "FM" => out.push_str(&format!(" {:>7}", v as u64)),
                _ => out.push_str(&format!(" {v:>7.1}")),
            }
        }
        out.push('\n');
    }
    out
}

impl Default for MotReport {
    fn default() -> Self {
        Self {
            idf1: 0.0,
            idp: 0.0,
            idr: 0.0,
            mt: 0.0,
            ml: 0.0,
            fp: 0,
            fn_: 0,
            ids: 0,
            fm: 0,
            mota: 0.0,
            motp: 0.0,
            num_objects: 0,
            num_predictions: 0,
            num_unique_objects: 0,
            idtp: 0,
        }
    }
}

impl fmt::Display for MotReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_table(&[("result", self)]))
    }
}

/// Evaluates track rows against ground-truth rows of the same schema.
pub fn evaluate(gt: &[TrackRecord], hyp: &[TrackRecord], config: &EvalConfig) -> Result<MotReport> {
    let mut frames: BTreeMap<u64, (Vec<Labeled>, Vec<Labeled>)> = BTreeMap::new();
    let lab = |r: &TrackRecord| Labeled {
        id: r.id,
        position: Point2::new(r.x_m, r.y_m),
    };
    for r in gt {
        frames.entry(r.frame).or_default().0.push(lab(r));
    }
    for r in hyp {
        frames.entry(r.frame).or_default().1.push(lab(r));
    }
    let mut acc = MotAccumulator::new(*config)?;
    for (frame, (g, h)) in &frames {
        acc.update(*frame, g, h)?;
    }
    acc.report()
}
