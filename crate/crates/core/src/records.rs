//! CSV record formats for detections, tracks and ground truth.
//!
//! Tracks and ground truth share one schema (`frame,id,x_m,y_m,matched`),
//! so either file can be fed to the evaluator on either side.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub x_m: f64,
    pub y_m: f64,
    pub peak_score: f64,
    pub class_score: f64,
    pub accepted: u8,
    /// Space-separated normalized histogram bins, empty when color is off.
    #[serde(default)]
    pub histogram: String,
}

impl DetectionRecord {
    pub fn new(frame: u64, d: &Detection, histogram: Option<&[f64]>) -> Self {
        Self {
            frame,
            x_m: d.proposal.position.x,
            y_m: d.proposal.position.y,
            peak_score: d.proposal.score,
            class_score: d.class_score,
            accepted: d.accepted as u8,
            histogram: histogram
                .map(|h| h.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "))
                .unwrap_or_default(),
        }
    }

    pub fn histogram_values(&self) -> Result<Vec<f64>> {
        self.histogram
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Data(format!("bad histogram value {t:?}: {e}"))))
            .collect()
    }
}

/// One trajectory (or ground-truth) position at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub x_m: f64,
    pub y_m: f64,
    pub matched: u8,
}

pub fn write_csv<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(r);
    reader.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn save_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_csv(std::io::BufWriter::new(file), rows)
}

pub fn load_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

pub fn load_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    let rows: Vec<TrackRecord> = load_csv(path)?;
    for r in &rows {
        if !(r.x_m.is_finite() && r.y_m.is_finite()) || r.matched > 1 {
            return Err(Error::Data(format!("{}: bad row at frame {}", path.display(), r.frame)));
        }
    }
    Ok(rows)
}

/// Tidy long-format row for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRecord {
    pub metric: String,
    pub frame: u64,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_rows_round_trip() {
        let rows = vec![
            TrackRecord {
                frame: 0,
                id: 1,
                x_m: 1.25,
                y_m: -0.5,
                matched: 1,
            },
            TrackRecord {
                frame: 1,
                id: 7,
                x_m: 0.1 + 0.2,
                y_m: 3.0,
                matched: 0,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("frame,id,x_m,y_m,matched\n"));
        let back: Vec<TrackRecord> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn detection_histogram_column() {
        let rec = DetectionRecord {
            frame: 3,
            x_m: 1.0,
            y_m: 2.0,
            peak_score: 0.9,
            class_score: 0.8,
            accepted: 1,
            histogram: "0.5 0 0.25 0.25".into(),
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let back: Vec<DetectionRecord> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].histogram_values().unwrap(), vec![0.5, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn malformed_csv_is_a_data_error() {
        let text = "frame,id,x_m,y_m,matched\n0,1,abc,0,1\n";
        let err = read_csv::<TrackRecord, _>(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Data);
    }
}
