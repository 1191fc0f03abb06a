//! RGB color histograms accumulated inside projected person cuboids.

use image::RgbImage;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraCalibration, Point2};

pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonCuboid {
    pub base_center: Point2,
    pub height: f64,
    pub width: f64,
    pub depth: f64,
}

impl PersonCuboid {
    pub fn new(base_center: Point2) -> Self {
        Self {
            base_center,
            height: 2.0,
            width: 0.6,
            depth: 0.6,
        }
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (hx, hy) = (self.width / 2.0, self.depth / 2.0);
        let c = self.base_center;
        let mut out = [Vector3::zeros(); 8];
        let mut i = 0;
        for z in [0.0, self.height] {
            for dy in [-hy, hy] {
                for dx in [-hx, hx] {
                    out[i] = Vector3::new(c.x + dx, c.y + dy, z);
                    i += 1;
                }
            }
        }
        out
    }
}

/// Axis-aligned image box in continuous pixel coordinates (pixel centers
/// at integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl ImageBox {
    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Inclusive pixel index ranges whose centers fall inside the box.
    pub fn pixel_range(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let cx0 = self.x0.ceil().max(0.0);
        let cy0 = self.y0.ceil().max(0.0);
        let cx1 = self.x1.floor().min(width as f64 - 1.0);
        let cy1 = self.y1.floor().min(height as f64 - 1.0);
        (cx0 <= cx1 && cy0 <= cy1).then_some((cx0 as u32, cy0 as u32, cx1 as u32, cy1 as u32))
    }

    pub fn center(&self) -> Point2 {
        Point2::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

/// Axis-aligned hull of the cuboid corners in front of the camera, clipped
/// to the image. `None` when nothing valid remains.
pub fn project_cuboid(cuboid: &PersonCuboid, calibration: &CameraCalibration) -> Option<ImageBox> {
    let mut hull: Option<ImageBox> = None;
    for corner in cuboid.corners() {
        let Some(p) = calibration.project(&corner) else {
            continue;
        };
        hull = Some(match hull {
            None => ImageBox {
                x0: p.x,
                y0: p.y,
                x1: p.x,
                y1: p.y,
            },
            Some(b) => ImageBox {
                x0: b.x0.min(p.x),
                y0: b.y0.min(p.y),
                x1: b.x1.max(p.x),
                y1: b.y1.max(p.y),
            },
        });
    }
    let b = hull?;
    let size = calibration.image_size();
    let clipped = ImageBox {
        x0: b.x0.max(-0.5),
        y0: b.y0.max(-0.5),
        x1: b.x1.min(size.width as f64 - 0.5),
        y1: b.y1.min(size.height as f64 - 0.5),
    };
    (clipped.x0 <= clipped.x1 && clipped.y0 <= clipped.y1).then_some(clipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    pub bins: usize,
    /// `bins^3` entries indexed `(r * bins + g) * bins + b`.
    pub counts: Vec<f64>,
    /// Set when no pixel contributed; counts are then all zero.
    pub empty: bool,
}

impl ColorHistogram {
    pub fn empty(bins: usize) -> Self {
        Self {
            bins,
            counts: vec![0.0; bins * bins * bins],
            empty: true,
        }
    }

    /// Equal-weight blend of two normalized histograms.
    pub fn blend(&self, other: &ColorHistogram) -> Result<ColorHistogram> {
        check_layout(self, other)?;
        if self.empty {
            return Ok(other.clone());
        }
        if other.empty {
            return Ok(self.clone());
        }
        Ok(ColorHistogram {
            bins: self.bins,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| 0.5 * (a + b)).collect(),
            empty: false,
        })
    }
}

/// Raw per-bin pixel counts, normalized once in [`HistogramAccumulator::finish`].
#[derive(Debug, Clone)]
pub struct HistogramAccumulator {
    bins: usize,
    counts: Vec<u64>,
}

impl HistogramAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if !(2..=256).contains(&bins) {
            return Err(Error::Config(format!("histogram bins must be in 2..=256, got {bins}")));
        }
        Ok(Self {
            bins,
            counts: vec![0; bins * bins * bins],
        })
    }

    #[inline]
    fn bin(&self, v: u8) -> usize {
        v as usize * self.bins / 256
    }

    pub fn add_pixel(&mut self, rgb: [u8; 3]) {
        let i = (self.bin(rgb[0]) * self.bins + self.bin(rgb[1])) * self.bins + self.bin(rgb[2]);
        self.counts[i] += 1;
    }

    pub fn add_box(&mut self, image: &RgbImage, bbox: &ImageBox) {
        if let Some((x0, y0, x1, y1)) = bbox.pixel_range(image.width(), image.height()) {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    self.add_pixel(image.get_pixel(x, y).0);
                }
            }
        }
    }

    pub fn finish(self) -> ColorHistogram {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return ColorHistogram::empty(self.bins);
        }
        let t = total as f64;
        ColorHistogram {
            bins: self.bins,
            counts: self.counts.iter().map(|&c| c as f64 / t).collect(),
            empty: false,
        }
    }
}

pub fn histogram(image: &RgbImage, bbox: &ImageBox, bins: usize) -> Result<ColorHistogram> {
    let mut acc = HistogramAccumulator::new(bins)?;
    acc.add_box(image, bbox);
    Ok(acc.finish())
}

/// Histogram over every view that sees the cuboid, normalized once.
pub fn multi_view_histogram(views: &[(&CameraCalibration, &RgbImage)], cuboid: &PersonCuboid, bins: usize) -> Result<ColorHistogram> {
    let mut acc = HistogramAccumulator::new(bins)?;
    for (calibration, image) in views {
        if let Some(b) = project_cuboid(cuboid, calibration) {
            acc.add_box(image, &b);
        }
    }
    Ok(acc.finish())
}

fn check_layout(a: &ColorHistogram, b: &ColorHistogram) -> Result<()> {
    if a.bins != b.bins || a.counts.len() != b.counts.len() {
        return Err(Error::ShapeMismatch(format!(
            "histogram layouts differ: {} vs {} bins",
            a.bins, b.bins
        )));
    }
    Ok(())
}

/// Histogram intersection.
pub fn similarity(a: &ColorHistogram, b: &ColorHistogram) -> Result<f64> {
    check_layout(a, b)?;
    let s: f64 = a.counts.iter().zip(&b.counts).map(|(x, y)| x.min(*y)).sum();
    Ok(s.clamp(0.0, 1.0))
}
