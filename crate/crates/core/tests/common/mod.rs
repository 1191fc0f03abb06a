#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mctrack::metrics::{evaluate, EvalConfig, MotReport};
use mctrack::records::TrackRecord;
use serde::Deserialize;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

#[derive(Deserialize)]
pub struct Golden {
    pub box_side: f64,
    pub iou_threshold: f64,
    pub sequences: Vec<GoldenSequence>,
}

#[derive(Deserialize)]
pub struct GoldenSequence {
    pub name: String,
    pub gt: Vec<(u64, u64, f64, f64)>,
    pub hyp: Vec<(u64, u64, f64, f64)>,
    pub expected: serde_json::Map<String, serde_json::Value>,
}

pub fn load_golden() -> Golden {
    let text = std::fs::read_to_string(fixture("metrics_golden.json")).expect("golden fixture");
    serde_json::from_str(&text).expect("golden fixture parses")
}

fn rows(v: &[(u64, u64, f64, f64)]) -> Vec<TrackRecord> {
    v.iter()
        .map(|&(frame, id, x_m, y_m)| TrackRecord {
            frame,
            id,
            x_m,
            y_m,
            matched: 1,
        })
        .collect()
}

/// Largest absolute deviation from the golden values, with its metric.
pub fn golden_deviation(golden: &Golden, seq: &GoldenSequence) -> (MotReport, f64, String) {
    let config = EvalConfig {
        box_side: golden.box_side,
        iou_threshold: golden.iou_threshold,
    };
    let report = evaluate(&rows(&seq.gt), &rows(&seq.hyp), &config).expect("evaluation");
    let ours = serde_json::to_value(report).expect("report serializes");
    let mut worst = (0.0, String::new());
    for (k, v) in &seq.expected {
        let want = v.as_f64().expect("numeric expectation");
        let got = ours[k.as_str()].as_f64().unwrap_or_else(|| panic!("report lacks {k}"));
        let d = (got - want).abs();
        if d > worst.0 || worst.1.is_empty() {
            worst = (d, k.clone());
        }
    }
    (report, worst.0, worst.1)
}
