//! Online min-cost-flow tracker.
//!
//! Every frame builds a small graph: source → trajectory → {gated
//! detection | the trajectory's own prediction node} → sink. All capacities
//! are 1, so a max flow saturates every trajectory and the min-cost flow
//! picks node-disjoint paths. Detections left unused start new trajectories.

use serde::{Deserialize, Serialize};

use crate::appearance::{similarity, ColorHistogram};
use crate::error::{Error, Result};
use crate::flow::MinCostFlow;
use crate::geometry::{Point2, Vector2};
use crate::records::TrackRecord;

/// Costs are quantized to millimeters.
pub const SCALE: f64 = 1000.0;
pub const DEFAULT_MAX_SPEED: f64 = 4.0;
pub const DEFAULT_FPS: f64 = 15.0;
pub const DEFAULT_MAX_MISSES: u32 = 100;
pub const DEFAULT_COLOR_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerParams {
    /// Gating radius in meters.
    pub gate_radius: f64,
    /// Coasting cost as a fraction of the gating radius.
    pub miss_penalty_ratio: f64,
    pub max_misses: u32,
    pub use_color: bool,
    pub color_weight: f64,
    pub velocity_decay: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            gate_radius: DEFAULT_MAX_SPEED / DEFAULT_FPS,
            miss_penalty_ratio: 0.6,
            max_misses: DEFAULT_MAX_MISSES,
            use_color: false,
            color_weight: DEFAULT_COLOR_WEIGHT,
            velocity_decay: 0.5,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_radius > 0.0 && self.gate_radius.is_finite()) {
            return Err(Error::Config(format!("gate radius must be positive, got {}", self.gate_radius)));
        }
        if !(self.miss_penalty_ratio >= 0.0) {
            return Err(Error::Config("miss penalty ratio must be non-negative".into()));
        }
        if self.max_misses == 0 {
            return Err(Error::Config("max_misses must be at least 1".into()));
        }
        if !(self.color_weight >= 0.0) {
            return Err(Error::Config("color weight must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.velocity_decay) {
            return Err(Error::Config("velocity decay must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn miss_penalty(&self) -> f64 {
        self.miss_penalty_ratio * self.gate_radius
    }

    /// Association cost in meters: distance plus, with color on, the
    /// histogram dissimilarity scaled to the gating radius. This is
    /// `d_L * (d / d_L + λ (1 - sim))`, so it ranks like the normalized
    /// form while staying comparable to the miss penalty.
    pub fn cost(&self, distance: f64, sim: Option<f64>) -> f64 {
        match (self.use_color, sim) {
            (true, Some(s)) => distance + self.color_weight * self.gate_radius * (1.0 - s),
            _ => distance,
        }
    }
}

fn quantize(cost: f64) -> i64 {
    (cost * SCALE).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub frame: u64,
    pub position: Point2,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub states: Vec<TrackState>,
    pub misses: u32,
    pub velocity: Vector2,
    pub appearance: Option<ColorHistogram>,
}

impl Trajectory {
    pub fn new(id: u64, frame: u64, position: Point2, appearance: Option<ColorHistogram>) -> Self {
        Self {
            id,
            states: vec![TrackState {
                frame,
                position,
                matched: true,
            }],
            misses: 0,
            velocity: Vector2::zeros(),
            appearance,
        }
    }

    pub fn last(&self) -> &TrackState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Constant-velocity extrapolation one frame ahead.
pub fn predict(trajectory: &Trajectory) -> Point2 {
    trajectory.last().position + trajectory.velocity
}

/// Tracker input for one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackInput {
    pub position: Point2,
    pub appearance: Option<ColorHistogram>,
}

impl TrackInput {
    pub fn at(position: Point2) -> Self {
        Self {
            position,
            appearance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Detection(usize),
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphEdge {
    pub trajectory: usize,
    pub target: Target,
    pub cost: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    pub trajectory_ids: Vec<u64>,
    pub detections: usize,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameAssignment {
    pub matches: Vec<(u64, usize)>,
    pub unmatched_trajectories: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
    pub cost: i64,
}

/// Gated trajectory→detection edges plus one prediction edge per trajectory.
pub fn build_graph(trajectories: &[Trajectory], detections: &[TrackInput], params: &TrackerParams) -> Result<AssociationGraph> {
    let mut edges = Vec::new();
    let miss = quantize(params.miss_penalty());
    for (t, traj) in trajectories.iter().enumerate() {
        let predicted = predict(traj);
        for (j, det) in detections.iter().enumerate() {
            let d = (det.position - predicted).norm();
            if d > params.gate_radius {
                continue;
            }
            let sim = match (&traj.appearance, &det.appearance) {
                (Some(a), Some(b)) if params.use_color && !a.empty && !b.empty => Some(similarity(a, b)?),
                _ => None,
            };
            edges.push(GraphEdge {
                trajectory: t,
                target: Target::Detection(j),
                cost: quantize(params.cost(d, sim)),
            });
        }
        edges.push(GraphEdge {
            trajectory: t,
            target: Target::Prediction,
            cost: miss,
        });
    }
    Ok(AssociationGraph {
        trajectory_ids: trajectories.iter().map(|t| t.id).collect(),
        detections: detections.len(),
        edges,
    })
}

/// Min-cost max-flow over the graph, decoded into a node-disjoint matching.
pub fn solve_assignment(graph: &AssociationGraph) -> FrameAssignment {
    let nt = graph.trajectory_ids.len();
    let nd = graph.detections;
    // source, sink, trajectories, detections, predictions
    let (source, sink) = (0, 1);
    let traj_node = |t: usize| 2 + t;
    let det_node = |j: usize| 2 + nt + j;
    let pred_node = |t: usize| 2 + nt + nd + t;
    let mut g = MinCostFlow::new(2 + 2 * nt + nd);
    for t in 0..nt {
        g.add_edge(source, traj_node(t), 1, 0);
        g.add_edge(pred_node(t), sink, 1, 0);
    }
    for j in 0..nd {
        g.add_edge(det_node(j), sink, 1, 0);
    }
    let ids: Vec<_> = graph
        .edges
        .iter()
        .map(|e| {
            let to = match e.target {
                Target::Detection(j) => det_node(j),
                Target::Prediction => pred_node(e.trajectory),
            };
            g.add_edge(traj_node(e.trajectory), to, 1, e.cost)
        })
        .collect();
    let result = g.solve(source, sink, None);
    let mut out = FrameAssignment {
        cost: result.cost,
        ..Default::default()
    };
    let mut det_used = vec![false; nd];
    let mut traj_matched = vec![false; nt];
    for (e, &id) in graph.edges.iter().zip(&ids) {
        if g.flow(id) == 0 {
            continue;
        }
        if let Target::Detection(j) = e.target {
            out.matches.push((graph.trajectory_ids[e.trajectory], j));
            det_used[j] = true;
            traj_matched[e.trajectory] = true;
        }
    }
    out.matches.sort_unstable();
    out.unmatched_trajectories = (0..nt).filter(|&t| !traj_matched[t]).map(|t| graph.trajectory_ids[t]).collect();
    out.unmatched_detections = (0..nd).filter(|&j| !det_used[j]).collect();
    out
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub assignment: FrameAssignment,
    /// Ids created for the unmatched detections, in detection order.
    pub births: Vec<(usize, u64)>,
    pub retired: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    trajectories: Vec<Trajectory>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            trajectories: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Advances one frame. Frames must be consecutive after the first.
    pub fn step(&mut self, frame: u64, detections: &[TrackInput]) -> Result<StepOutcome> {
        if let Some(last) = self.last_frame {
            if frame != last + 1 {
                return Err(Error::NonConsecutiveFrame {
                    expected_after: last,
                    got: frame,
                });
            }
        }
        self.last_frame = Some(frame);
        let graph = build_graph(&self.trajectories, detections, &self.params)?;
        let assignment = solve_assignment(&graph);

        let mut matched_to: Vec<Option<usize>> = vec![None; self.trajectories.len()];
        // matches are sorted by id and trajectories are kept in id order
        for &(id, j) in &assignment.matches {
            let t = self
                .trajectories
                .binary_search_by_key(&id, |t| t.id)
                .expect("matched id belongs to an active trajectory");
            matched_to[t] = Some(j);
        }
        let decay = self.params.velocity_decay;
        for (traj, m) in self.trajectories.iter_mut().zip(matched_to) {
            match m {
                Some(j) => {
                    let det = &detections[j];
                    let disp = det.position - traj.last().position;
                    traj.velocity = traj.velocity * decay + disp * (1.0 - decay);
                    traj.states.push(TrackState {
                        frame,
                        position: det.position,
                        matched: true,
                    });
                    traj.misses = 0;
                    if let Some(h) = &det.appearance {
                        traj.appearance = Some(match &traj.appearance {
                            Some(a) => a.blend(h)?,
                            None => h.clone(),
                        });
                    }
                }
                None => {
                    let position = predict(traj);
                    traj.states.push(TrackState {
                        frame,
                        position,
                        matched: false,
                    });
                    traj.misses += 1;
                }
            }
        }
        let max_misses = self.params.max_misses;
        let mut retired = Vec::new();
        self.trajectories.retain(|t| {
            let keep = t.misses < max_misses;
            if !keep {
                retired.push(t.id);
            }
            keep
        });
        let mut births = Vec::with_capacity(assignment.unmatched_detections.len());
        for &j in &assignment.unmatched_detections {
            let id = self.next_id;
            self.next_id += 1;
            let det = &detections[j];
            self.trajectories
                .push(Trajectory::new(id, frame, det.position, det.appearance.clone()));
            births.push((j, id));
        }
        Ok(StepOutcome {
            assignment,
            births,
            retired,
        })
    }

    /// Rows for `frame` from the trajectories still active, by id. Coasted
    /// states are included only when asked.
    pub fn rows(&self, frame: u64, include_coasted: bool) -> Vec<TrackRecord> {
        self.trajectories
            .iter()
            .filter_map(|t| {
                let s = t.last();
                (s.frame == frame && (s.matched || include_coasted)).then_some(TrackRecord {
                    frame,
                    id: t.id,
                    x_m: s.position.x,
                    y_m: s.position.y,
                    matched: s.matched as u8,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn traj_at(id: u64, pos: Point2) -> Trajectory {
        Trajectory::new(id, 0, pos, None)
    }

    #[test]
    fn predict_follows_ema() {
        let mut t = traj_at(1, p(0.0, 0.0));
        assert_eq!(predict(&t), p(0.0, 0.0));
        let mut tracker = Tracker::new(TrackerParams {
            gate_radius: 2.0,
            ..Default::default()
        })
        .unwrap();
        tracker.step(0, &[TrackInput::at(p(0.0, 0.0))]).unwrap();
        tracker.step(1, &[TrackInput::at(p(0.0, 1.0))]).unwrap();
        t = tracker.trajectories()[0].clone();
        assert_eq!(t.velocity, Vector2::new(0.0, 0.5));
        assert_eq!(predict(&t), p(0.0, 1.5));
    }

    #[test]
    fn no_detections_leaves_only_prediction_edges() {
        let trajs = vec![traj_at(1, p(0.0, 0.0)), traj_at(2, p(1.0, 0.0))];
        let g = build_graph(&trajs, &[], &TrackerParams::default()).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| e.target == Target::Prediction));
        let a = solve_assignment(&g);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_trajectories, vec![1, 2]);
    }

    #[test]
    fn zero_distance_match_beats_coasting() {
        let trajs = vec![traj_at(1, p(0.0, 0.0))];
        let g = build_graph(&trajs, &[TrackInput::at(p(0.0, 0.0))], &TrackerParams::default()).unwrap();
        let a = solve_assignment(&g);
        assert_eq!(a.matches, vec![(1, 0)]);
        assert_eq!(a.cost, 0);
    }

    #[test]
    fn gating_boundary() {
        let params = TrackerParams {
            gate_radius: 0.25,
            ..Default::default()
        };
        let trajs = vec![traj_at(1, p(0.0, 0.0))];
        let inside = build_graph(&trajs, &[TrackInput::at(p(0.25, 0.0))], &params).unwrap();
        assert_eq!(inside.edges.len(), 2);
        let outside = build_graph(&trajs, &[TrackInput::at(p(0.25 + 1e-9, 0.0))], &params).unwrap();
        assert_eq!(outside.edges.len(), 1);
    }

    #[test]
    fn crossed_distances_pick_min_total() {
        let params = TrackerParams {
            gate_radius: 1.0,
            ..Default::default()
        };
        let trajs = vec![traj_at(1, p(0.0, 0.0)), traj_at(2, p(1.0, 0.0))];
        let dets = [TrackInput::at(p(0.95, 0.0)), TrackInput::at(p(0.1, 0.0))];
        let a = solve_assignment(&build_graph(&trajs, &dets, &params).unwrap());
        assert_eq!(a.matches, vec![(1, 1), (2, 0)]);
        assert_eq!(a.cost, 150);
    }

    /// Exhaustive minimum over node-disjoint assignments where each
    /// trajectory takes one gated detection or its prediction node.
    pub(crate) fn brute_force(graph: &AssociationGraph) -> i64 {
        let nt = graph.trajectory_ids.len();
        let mut options: Vec<Vec<(Option<usize>, i64)>> = vec![Vec::new(); nt];
        for e in &graph.edges {
            let target = match e.target {
                Target::Detection(j) => Some(j),
                Target::Prediction => None,
            };
            options[e.trajectory].push((target, e.cost));
        }
        fn rec(t: usize, options: &[Vec<(Option<usize>, i64)>], used: &mut [bool]) -> i64 {
            if t == options.len() {
                return 0;
            }
            let mut best = i64::MAX;
            for &(target, c) in &options[t] {
                match target {
                    Some(j) if used[j] => continue,
                    Some(j) => {
                        used[j] = true;
                        best = best.min(c + rec(t + 1, options, used));
                        used[j] = false;
                    }
                    None => best = best.min(c + rec(t + 1, options, used)),
                }
            }
            best
        }
        rec(0, &options, &mut vec![false; graph.detections])
    }

    #[test]
    fn random_instances_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = TrackerParams {
            gate_radius: 0.6,
            ..Default::default()
        };
        for _ in 0..1000 {
            let nt = rng.random_range(0..=6);
            let nd = rng.random_range(0..=6);
            let trajs: Vec<_> = (0..nt)
                .map(|i| traj_at(i as u64 + 1, p(rng.random_range(0.0..1.5), rng.random_range(0.0..1.5))))
                .collect();
            let dets: Vec<_> = (0..nd)
                .map(|_| TrackInput::at(p(rng.random_range(0.0..1.5), rng.random_range(0.0..1.5))))
                .collect();
            let g = build_graph(&trajs, &dets, &params).unwrap();
            let a = solve_assignment(&g);
            assert_eq!(a.cost, brute_force(&g));
            assert_eq!(a.matches.len() + a.unmatched_trajectories.len(), nt);
            let mut seen = std::collections::HashSet::new();
            assert!(a.matches.iter().all(|&(_, j)| seen.insert(j)));
        }
    }

    #[test]
    fn steady_target_keeps_one_id() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        for f in 0..300 {
            let x = 0.08 * f as f64;
            let out = tr.step(f, &[TrackInput::at(p(x, 1.0))]).unwrap();
            if f > 0 {
                assert!(out.births.is_empty());
            }
        }
        assert_eq!(tr.trajectories().len(), 1);
        assert_eq!(tr.trajectories()[0].id, 1);
    }

    #[test]
    fn occlusion_gap_keeps_id() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        for f in 0..40 {
            let x = 0.06 * f as f64;
            let dets = if (20..25).contains(&f) {
                vec![]
            } else {
                vec![TrackInput::at(p(x, 0.0))]
            };
            tr.step(f, &dets).unwrap();
        }
        assert_eq!(tr.trajectories().len(), 1);
        let t = &tr.trajectories()[0];
        assert_eq!(t.states.iter().filter(|s| !s.matched).count(), 5);
        assert_eq!(tr.rows(39, false)[0].id, 1);
    }

    #[test]
    fn far_detection_spawns_new_id_and_retirement() {
        let mut tr = Tracker::new(TrackerParams {
            max_misses: 3,
            ..Default::default()
        })
        .unwrap();
        tr.step(0, &[TrackInput::at(p(0.0, 0.0))]).unwrap();
        let out = tr.step(1, &[TrackInput::at(p(5.0, 5.0))]).unwrap();
        assert_eq!(out.births, vec![(0, 2)]);
        tr.step(2, &[TrackInput::at(p(5.0, 5.0))]).unwrap();
        let out = tr.step(3, &[TrackInput::at(p(5.0, 5.0))]).unwrap();
        assert_eq!(out.retired, vec![1]);
        assert_eq!(tr.trajectories().len(), 1);
        assert_eq!(tr.rows(3, true).len(), 1);
    }

    #[test]
    fn non_consecutive_frame_is_rejected() {
        let mut tr = Tracker::new(TrackerParams::default()).unwrap();
        tr.step(10, &[]).unwrap();
        assert!(matches!(
            tr.step(12, &[]),
            Err(Error::NonConsecutiveFrame {
                expected_after: 10,
                got: 12
            })
        ));
    }

    #[test]
    fn color_term_breaks_spatial_tie() {
        let mk = |bin: usize| {
            let mut h = ColorHistogram::empty(2);
            h.counts[bin] = 1.0;
            h.empty = false;
            h
        };
        let params = TrackerParams {
            gate_radius: 1.0,
            use_color: true,
            ..Default::default()
        };
        let mut t1 = traj_at(1, p(0.0, 0.0));
        t1.appearance = Some(mk(0));
        let mut t2 = traj_at(2, p(0.2, 0.0));
        t2.appearance = Some(mk(7));
        let dets = [
            TrackInput {
                position: p(0.18, 0.0),
                appearance: Some(mk(0)),
            },
            TrackInput {
                position: p(0.02, 0.0),
                appearance: Some(mk(7)),
            },
        ];
        let a = solve_assignment(&build_graph(&[t1.clone(), t2.clone()], &dets, &params).unwrap());
        assert_eq!(a.matches, vec![(1, 0), (2, 1)]);
        let plain = TrackerParams {
            use_color: false,
            ..params
        };
        let a = solve_assignment(&build_graph(&[t1, t2], &dets, &plain).unwrap());
        assert_eq!(a.matches, vec![(1, 1), (2, 0)]);
    }
}
