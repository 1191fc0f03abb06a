//! Proposal generation on the fused occupancy map and the per-proposal
//! decision stage.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::FusedMap;
use crate::geometry::Point2;
use crate::glimpse::{extract_features, GlimpseClassifier};
use crate::occupancy::OccupancyMap;

pub const DEFAULT_MIN_SCORE: f64 = 0.3;
pub const DEFAULT_MIN_SEPARATION_M: f64 = 0.3;
pub const DEFAULT_LABEL_IOU: f64 = 0.5;
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BOX_SIDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub row: usize,
    pub col: usize,
    pub position: Point2,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub proposal: Proposal,
    pub class_score: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalLabel {
    pub iou: f64,
    pub positive: bool,
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

fn neighbors(map: &OccupancyMap, row: usize, col: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (rows, cols) = map.shape();
    NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
        let r = row as isize + dr;
        let c = col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols).then_some((r as usize, c as usize))
    })
}

fn is_weak_max(map: &OccupancyMap, row: usize, col: usize) -> bool {
    let v = map.get(row, col);
    neighbors(map, row, col).all(|(r, c)| map.get(r, c) <= v)
}

/// Cells at least `min_score` and no smaller than any 8-neighbor. A flat
/// plateau yields only its lexicographically first (row, col) cell, and
/// then peaks closer than `min_separation` cells to a stronger peak are
/// dropped. Output is ordered by descending score, ties by (row, col).
pub fn local_maxima(map: &OccupancyMap, min_score: f64, min_separation: f64) -> Vec<Proposal> {
    let grid = map.grid();
    let (rows, cols) = map.shape();
    let mut visited: Option<Vec<bool>> = None;
    let mut peaks: Vec<(usize, usize, f64)> = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let v = map.get(row, col);
            if v < min_score || !is_weak_max(map, row, col) {
                continue;
            }
            let flat = neighbors(map, row, col).any(|(r, c)| map.get(r, c) == v);
            if !flat {
                peaks.push((row, col, v));
                continue;
            }
            let seen = visited.get_or_insert_with(|| vec![false; rows * cols]);
            if seen[row * cols + col] {
                continue;
            }
            // Flood the equal-valued component; it is a maximum only if
            // every member is.
            let mut stack = vec![(row, col)];
            seen[row * cols + col] = true;
            let mut is_max = true;
            let mut first = (row, col);
            while let Some((r, c)) = stack.pop() {
                first = first.min((r, c));
                is_max &= is_weak_max(map, r, c);
                for (nr, nc) in neighbors(map, r, c) {
                    if !seen[nr * cols + nc] && map.get(nr, nc) == v {
                        seen[nr * cols + nc] = true;
                        stack.push((nr, nc));
                    }
                }
            }
            if is_max {
                peaks.push((first.0, first.1, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let min_sep2 = min_separation * min_separation;
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    for p in peaks {
        let clear = kept.iter().all(|k| {
            let dr = k.0 as f64 - p.0 as f64;
            let dc = k.1 as f64 - p.1 as f64;
            dr * dr + dc * dc >= min_sep2
        });
        if clear {
            kept.push(p);
        }
    }
    kept.into_iter()
        .map(|(row, col, score)| Proposal {
            row,
            col,
            position: grid.map_or(Point2::new(col as f64, row as f64), |g| g.cell_center(row, col)),
            score,
        })
        .collect()
}

/// IoU of two axis-aligned squares of side `side` centered at `a` and `b`.
pub fn square_iou(a: &Point2, b: &Point2, side: f64) -> f64 {
    let ox = (side - (a.x - b.x).abs()).max(0.0);
    let oy = (side - (a.y - b.y).abs()).max(0.0);
    let inter = ox * oy;
    inter / (2.0 * side * side - inter)
}

/// Scores each proposal against its nearest ground-truth point.
pub fn label_proposals(proposals: &[Proposal], ground_truth: &[Point2], box_side: f64, iou_threshold: f64) -> Vec<ProposalLabel> {
    proposals
        .iter()
        .map(|p| {
            let nearest = ground_truth
                .iter()
                .min_by(|a, b| (p.position - **a).norm().total_cmp(&(p.position - **b).norm()));
            let iou = nearest.map_or(0.0, |g| square_iou(&p.position, g, box_side));
            ProposalLabel {
                iou,
                positive: iou >= iou_threshold,
            }
        })
        .collect()
}

/// What decides whether a proposal is a person.
#[derive(Debug, Clone, Default)]
pub enum Recognizer {
    /// Every proposal scores 1; detection reduces to peak finding.
    #[default]
    PassThrough,
    Glimpse(GlimpseClassifier),
}

impl Recognizer {
    pub fn history_len(&self) -> usize {
        match self {
            Recognizer::PassThrough => 0,
            Recognizer::Glimpse(c) => c.config.history_len,
        }
    }
}

/// Scores proposals from the newest map in `history` (ordered oldest to
/// newest). Missing history is padded by repeating the oldest map.
pub fn classify(proposals: &[Proposal], history: &[&FusedMap], recognizer: &Recognizer, threshold: f64) -> Result<Vec<Detection>> {
    proposals
        .iter()
        .map(|p| {
            let class_score = match recognizer {
                Recognizer::PassThrough => 1.0,
                Recognizer::Glimpse(model) => {
                    let features = extract_features(p, history, &model.config)?;
                    model.score(&features)?
                }
            };
            Ok(Detection {
                proposal: *p,
                class_score,
                accepted: class_score >= threshold,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GroundGrid;
    use proptest::prelude::*;

    fn grid(n: usize) -> GroundGrid {
        GroundGrid::new(Point2::origin(), 0.025, n, n).unwrap()
    }

    fn bumps(g: GroundGrid, centers: &[(f64, f64)], sigma: f64) -> OccupancyMap {
        let mut m = OccupancyMap::zeros_ground(g);
        for r in 0..g.rows {
            for c in 0..g.cols {
                let v = centers
                    .iter()
                    .map(|&(cr, cc)| (-((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .fold(0.0, f64::max);
                m.set(r, c, v);
            }
        }
        m
    }

    /// Strict-max scan used as an independent oracle on maps without ties.
    fn brute_strict_maxima(m: &OccupancyMap, min_score: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m.get(r, c);
                let mut ok = v >= min_score;
                for dr in -1..=1isize {
                    for dc in -1..=1isize {
                        if (dr, dc) != (0, 0) && m.get_or_zero(r as isize + dr, c as isize + dc) >= v {
                            ok = false;
                        }
                    }
                }
                if ok {
                    out.push((r, c));
                }
            }
        }
        out
    }

    #[test]
    fn zero_map_has_no_proposals() {
        let m = OccupancyMap::zeros_ground(grid(30));
        assert!(local_maxima(&m, 0.3, 12.0).is_empty());
    }

    #[test]
    fn single_bump_gives_its_peak() {
        let m = bumps(grid(40), &[(17.3, 22.6)], 3.0);
        let props = local_maxima(&m, 0.3, 12.0);
        let brute = brute_strict_maxima(&m, 0.3);
        assert_eq!(brute, vec![(17, 23)]);
        assert_eq!(props.len(), 1);
        assert_eq!((props[0].row, props[0].col), brute[0]);
        assert_eq!(props[0].score, m.get(17, 23));
        assert_eq!(props[0].position, grid(40).cell_center(17, 23));
    }

    #[test]
    fn separation_merges_close_bumps() {
        let far = bumps(grid(60), &[(20.0, 10.0), (20.0, 40.0)], 2.0);
        assert_eq!(local_maxima(&far, 0.3, 12.0).len(), 2);
        let mut close = bumps(grid(60), &[(20.0, 20.0), (20.0, 28.0)], 2.0);
        close.set(20, 28, 0.9);
        let props = local_maxima(&close, 0.3, 12.0);
        assert_eq!(props.len(), 1);
        assert_eq!((props[0].row, props[0].col), (20, 20));
    }

    #[test]
    fn plateau_yields_first_cell() {
        let g = grid(20);
        let mut m = OccupancyMap::zeros_ground(g);
        for r in 5..9 {
            for c in 7..12 {
                m.set(r, c, 1.0);
            }
        }
        let props = local_maxima(&m, 0.3, 0.0);
        assert_eq!(props.len(), 1);
        assert_eq!((props[0].row, props[0].col), (5, 7));
    }

    #[test]
    fn plateau_touching_higher_cell_is_not_a_max() {
        let g = grid(10);
        let mut m = OccupancyMap::zeros_ground(g);
        for c in 2..6 {
            m.set(4, c, 0.5);
        }
        m.set(5, 6, 0.8);
        let props = local_maxima(&m, 0.3, 0.0);
        assert_eq!(props.len(), 1);
        assert_eq!((props[0].row, props[0].col), (5, 6));
    }

    #[test]
    fn iou_of_offset_boxes() {
        let a = Point2::new(0.0, 0.0);
        assert_eq!(square_iou(&a, &a, 1.0), 1.0);
        assert!((square_iou(&a, &Point2::new(0.5, 0.0), 1.0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(square_iou(&a, &Point2::new(1.2, 0.0), 1.0), 0.0);
    }

    #[test]
    fn labels_use_nearest_ground_truth() {
        let p = |x: f64, y: f64| Proposal {
            row: 0,
            col: 0,
            position: Point2::new(x, y),
            score: 1.0,
        };
        let gt = [Point2::new(0.0, 0.0), Point2::new(3.0, 0.0)];
        let labels = label_proposals(&[p(3.0, 0.0), p(0.5, 0.0), p(1.5, 5.0)], &gt, 1.0, 0.5);
        assert_eq!(labels[0], ProposalLabel { iou: 1.0, positive: true });
        assert!(!labels[1].positive && (labels[1].iou - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(labels[2], ProposalLabel { iou: 0.0, positive: false });
        assert!(label_proposals(&[p(0.0, 0.0)], &[], 1.0, 0.5)[0].iou == 0.0);
    }

    #[test]
    fn pass_through_accepts_everything() {
        let m = bumps(grid(40), &[(10.0, 10.0), (30.0, 30.0)], 2.0);
        let fused = FusedMap {
            coverage: vec![1; m.values().len()],
            mean: m,
            stacked: None,
        };
        let props = local_maxima(&fused.mean, 0.3, 12.0);
        let dets = classify(&props, &[&fused], &Recognizer::PassThrough, 0.5).unwrap();
        assert_eq!(dets.len(), 2);
        assert!(dets.iter().all(|d| d.accepted && d.class_score == 1.0));
    }

    /// Counts 1 cm raster cells inside each box. Centers sit on the 1 cm
    /// lattice so box edges align with raster cell borders.
    fn pixelized_iou_cm(a: (i64, i64), b: (i64, i64), side_cm: i64) -> f64 {
        let half = side_cm / 2;
        let inside = |p: (i64, i64), x: i64, y: i64| x >= p.0 - half && x < p.0 + half && y >= p.1 - half && y < p.1 + half;
        let (mut inter, mut union) = (0usize, 0usize);
        for x in a.0.min(b.0) - half..a.0.max(b.0) + half {
            for y in a.1.min(b.1) - half..a.1.max(b.1) + half {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union as f64
    }

    proptest! {
        #[test]
        fn square_iou_symmetric_and_matches_raster(
            ax in -150i64..150, ay in -150i64..150, bx in -150i64..150, by in -150i64..150,
        ) {
            let a = Point2::new(ax as f64 / 100.0, ay as f64 / 100.0);
            let b = Point2::new(bx as f64 / 100.0, by as f64 / 100.0);
            let iou = square_iou(&a, &b, 1.0);
            prop_assert_eq!(iou, square_iou(&b, &a, 1.0));
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert!((iou - pixelized_iou_cm((ax, ay), (bx, by), 100)).abs() < 1e-3);
        }

        #[test]
        fn maxima_are_deterministic_and_weak_maxima(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = grid(24);
            let mut m = OccupancyMap::zeros_ground(g);
            // Coarse quantization makes plateaus common.
            m.values_mut().iter_mut().for_each(|v| *v = (rng.random_range(0.0..1.0f64) * 4.0).floor() / 4.0);
            let a = local_maxima(&m, 0.3, 2.0);
            prop_assert_eq!(&a, &local_maxima(&m, 0.3, 2.0));
            for p in &a {
                prop_assert!(p.score >= 0.3);
                prop_assert!(is_weak_max(&m, p.row, p.col));
            }
            for (i, p) in a.iter().enumerate() {
                for q in &a[i + 1..] {
                    let d2 = (p.row as f64 - q.row as f64).powi(2) + (p.col as f64 - q.col as f64).powi(2);
                    prop_assert!(d2 >= 4.0);
                }
            }
        }
    }
}
