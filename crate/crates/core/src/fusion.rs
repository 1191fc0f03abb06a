//! Projection of per-view heatmaps onto the ground grid.
//!
//! For each ground cell the fuser caches where it lands in every view, so a
//! frame costs one bilinear read per (cell, camera). The averaged map divides
//! by the number of cameras that actually see the cell; the stacked variant
//! keeps one channel per camera in rig order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundGrid, Homography, ImageSize};
use crate::occupancy::{Lattice, OccupancyMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    #[serde(alias = "average")]
    Avg,
    Stack,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(FusionMode::Avg),
            "stack" => Ok(FusionMode::Stack),
            other => Err(Error::Config(format!("unknown fusion mode {other:?} (avg|stack)"))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Avg => "avg",
            FusionMode::Stack => "stack",
        })
    }
}

/// Predicted heatmaps of one frame with the homography of each view.
#[derive(Debug, Clone)]
pub struct ViewHeatmapSet {
    pub heatmaps: Vec<OccupancyMap>,
    pub homographies: Vec<Homography>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedMap {
    pub mean: OccupancyMap,
    /// Number of cameras seeing each cell, row-major.
    pub coverage: Vec<u16>,
    /// Per-camera planes, present for stacked fusion.
    pub stacked: Option<Vec<OccupancyMap>>,
}

impl FusedMap {
    pub fn grid(&self) -> GroundGrid {
        self.mean.grid().expect("fused maps live on the ground grid")
    }

    pub fn channels(&self) -> usize {
        self.stacked.as_ref().map_or(1, Vec::len)
    }
}

/// Precomputed bilinear sample of one view at one ground cell. Same
/// arithmetic as [`OccupancyMap::sample_bilinear`], minus the per-call
/// clamping and flooring.
#[derive(Debug, Clone, Copy)]
struct Tap {
    /// Index of the top-left pixel; `u32::MAX` when the cell is not visible.
    base: u32,
    /// Offset to the right neighbour (0 on the last column).
    dx: u32,
    /// Offset to the lower neighbour (0 on the last row).
    dy: u32,
    fx: f64,
    fy: f64,
}

impl Tap {
    const HIDDEN: Tap = Tap {
        base: u32::MAX,
        dx: 0,
        dy: 0,
        fx: 0.0,
        fy: 0.0,
    };

    fn new(x: f64, y: f64, size: ImageSize) -> Self {
        let x = x.clamp(0.0, (size.width - 1) as f64);
        let y = y.clamp(0.0, (size.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        Tap {
            base: (y0 * size.width + x0) as u32,
            dx: u32::from(x0 + 1 < size.width),
            dy: if y0 + 1 < size.height { size.width as u32 } else { 0 },
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        }
    }

    #[inline]
    fn visible(&self) -> bool {
        self.base != u32::MAX
    }

    #[inline]
    fn sample(&self, v: &[f64]) -> f64 {
        let i = self.base as usize;
        let (dx, dy) = (self.dx as usize, self.dy as usize);
        let top = v[i] * (1.0 - self.fx) + v[i + dx] * self.fx;
        let bottom = v[i + dy] * (1.0 - self.fx) + v[i + dy + dx] * self.fx;
        top * (1.0 - self.fy) + bottom * self.fy
    }
}

/// Cached ground-to-image lookup for a fixed rig and grid.
#[derive(Debug, Clone)]
pub struct Fuser {
    grid: GroundGrid,
    homographies: Vec<Homography>,
    /// Per camera, per cell: bilinear tap of the projected pixel.
    lookup: Vec<Vec<Tap>>,
    coverage: Vec<u16>,
}

impl Fuser {
    pub fn new(homographies: Vec<Homography>, grid: GroundGrid) -> Result<Self> {
        if homographies.is_empty() {
            return Err(Error::EmptyViews);
        }
        if homographies.len() > u16::MAX as usize {
            return Err(Error::Config("too many cameras".into()));
        }
        grid.validate()?;
        let lookup: Vec<Vec<Tap>> = homographies
            .par_iter()
            .map(|h| {
                let mut table = vec![Tap::HIDDEN; grid.len()];
                for row in 0..grid.rows {
                    for col in 0..grid.cols {
                        if let Some(q) = h.ground_to_image(&grid.cell_center(row, col)) {
                            table[row * grid.cols + col] = Tap::new(q.x, q.y, h.image_size());
                        }
                    }
                }
                table
            })
            .collect();
        let mut coverage = vec![0u16; grid.len()];
        for table in &lookup {
            for (c, p) in coverage.iter_mut().zip(table) {
                if p.visible() {
                    *c += 1;
                }
            }
        }
        Ok(Self {
            grid,
            homographies,
            lookup,
            coverage,
        })
    }

    pub fn grid(&self) -> &GroundGrid {
        &self.grid
    }

    pub fn cameras(&self) -> usize {
        self.homographies.len()
    }

    pub fn coverage(&self) -> &[u16] {
        &self.coverage
    }

    pub fn homographies(&self) -> &[Homography] {
        &self.homographies
    }

    fn check_inputs(&self, heatmaps: &[OccupancyMap]) -> Result<()> {
        if heatmaps.is_empty() {
            return Err(Error::EmptyViews);
        }
        if heatmaps.len() != self.homographies.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} heatmaps for {} cameras",
                heatmaps.len(),
                self.homographies.len()
            )));
        }
        for (i, (m, h)) in heatmaps.iter().zip(&self.homographies).enumerate() {
            if m.lattice() != Lattice::Image(h.image_size()) {
                return Err(Error::ShapeMismatch(format!(
                    "heatmap {i} is {}x{}, camera image is {}x{}",
                    m.cols(),
                    m.rows(),
                    h.image_size().width,
                    h.image_size().height
                )));
            }
        }
        Ok(())
    }

    pub fn fuse(&self, heatmaps: &[OccupancyMap], mode: FusionMode) -> Result<FusedMap> {
        match mode {
            FusionMode::Avg => self.fuse_average(heatmaps),
            FusionMode::Stack => self.fuse_stack(heatmaps),
        }
    }

    pub fn fuse_average(&self, heatmaps: &[OccupancyMap]) -> Result<FusedMap> {
        self.check_inputs(heatmaps)?;
        let cols = self.grid.cols;
        let mut mean = vec![0.0; self.grid.len()];
        mean.par_chunks_mut(cols).enumerate().for_each(|(row, out)| {
            let base = row * cols;
            for (col, slot) in out.iter_mut().enumerate() {
                let idx = base + col;
                let seen = self.coverage[idx];
                if seen == 0 {
                    continue;
                }
                let mut sum = 0.0;
                for (table, map) in self.lookup.iter().zip(heatmaps) {
                    let tap = &table[idx];
                    if tap.visible() {
                        sum += tap.sample(map.values());
                    }
                }
                *slot = sum / seen as f64;
            }
        });
        Ok(FusedMap {
            mean: OccupancyMap::from_values(Lattice::Ground(self.grid), mean)?,
            coverage: self.coverage.clone(),
            stacked: None,
        })
    }

    pub fn fuse_stack(&self, heatmaps: &[OccupancyMap]) -> Result<FusedMap> {
        self.check_inputs(heatmaps)?;
        let cols = self.grid.cols;
        let planes: Vec<Vec<f64>> = self
            .lookup
            .iter()
            .zip(heatmaps)
            .map(|(table, map)| {
                let mut plane = vec![0.0; self.grid.len()];
                plane.par_chunks_mut(cols).enumerate().for_each(|(row, out)| {
                    for (col, slot) in out.iter_mut().enumerate() {
                        let tap = &table[row * cols + col];
                        if tap.visible() {
                            *slot = tap.sample(map.values());
                        }
                    }
                });
                plane
            })
            .collect();
        let mut mean = vec![0.0; self.grid.len()];
        mean.par_chunks_mut(cols).enumerate().for_each(|(row, out)| {
            for (col, slot) in out.iter_mut().enumerate() {
                let idx = row * cols + col;
                let seen = self.coverage[idx];
                if seen > 0 {
                    let sum: f64 = self
                        .lookup
                        .iter()
                        .zip(&planes)
                        .filter(|(t, _)| t[idx].visible())
                        .map(|(_, p)| p[idx])
                        .sum();
                    *slot = sum / seen as f64;
                }
            }
        });
        let lattice = Lattice::Ground(self.grid);
        let stacked = planes
            .into_iter()
            .map(|p| OccupancyMap::from_values(lattice, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(FusedMap {
            mean: OccupancyMap::from_values(lattice, mean)?,
            coverage: self.coverage.clone(),
            stacked: Some(stacked),
        })
    }
}

/// Averages the views that see each cell.
pub fn fuse_average(views: &ViewHeatmapSet, grid: &GroundGrid) -> Result<FusedMap> {
    Fuser::new(views.homographies.clone(), *grid)?.fuse_average(&views.heatmaps)
}

/// Keeps one ground-grid channel per view, plus the average.
pub fn fuse_stack(views: &ViewHeatmapSet, grid: &GroundGrid) -> Result<FusedMap> {
    Fuser::new(views.homographies.clone(), *grid)?.fuse_stack(&views.heatmaps)
}
