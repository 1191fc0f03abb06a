//! Ground-truth heatmap construction and the masked focal objective.
//!
//! Two view-space targets are provided: the perspective-aware label, built
//! by rasterizing equal-radius ground disks and splatting every ground cell
//! into the image, and the isotropic Gaussian baseline drawn directly in
//! pixel space. Forward-projecting both back to the ground shows why the
//! former is preferred: it returns round disks, the latter elongated blobs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundGrid, Homography, ImageSize, Point2, W_EPSILON};
use crate::occupancy::{Lattice, OccupancyMap};

pub const DEFAULT_DISK_RADIUS: f64 = 0.20;
/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const FOCAL_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalLossParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 4.0 }
    }
}

impl FocalLossParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!(
                "focal loss needs alpha > 0 and beta > 0, got {alpha}, {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Target heatmap `H` and binary mask `M` for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLabel {
    pub heatmap: OccupancyMap,
    pub mask: OccupancyMap,
}

/// Binary union of equal-radius disks: a cell is 1 when its center lies
/// within `radius` of any center.
pub fn disk_occupancy(grid: &GroundGrid, centers: &[Point2], radius: f64) -> Result<OccupancyMap> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("disk radius must be positive, got {radius}")));
    }
    let mut map = OccupancyMap::zeros_ground(*grid);
    let reach = (radius / grid.cell_size).ceil() as isize + 1;
    for c in centers {
        let (rc, cc) = grid.to_cell_coords(c);
        let (rc, cc) = (rc.round() as isize, cc.round() as isize);
        for row in (rc - reach).max(0)..=(rc + reach).min(grid.rows as isize - 1) {
            for col in (cc - reach).max(0)..=(cc + reach).min(grid.cols as isize - 1) {
                let (row, col) = (row as usize, col as usize);
                if (grid.cell_center(row, col) - c).norm() <= radius {
                    map.set(row, col, 1.0);
                }
            }
        }
    }
    Ok(map)
}

/// Splats every ground cell into the view. The mask marks pixels hit by at
/// least one cell; the heatmap keeps the maximum disk value landing there.
pub fn backproject_label(disk_map: &OccupancyMap, h: &Homography, size: ImageSize) -> Result<GroundTruthLabel> {
    let grid = disk_map
        .grid()
        .ok_or_else(|| Error::ShapeMismatch("disk map must live on a ground grid".into()))?;
    let mut heatmap = OccupancyMap::zeros_image(size);
    let mut mask = OccupancyMap::zeros_image(size);
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let Some(q) = h.project_unbounded(&grid.cell_center(row, col)) else {
                continue;
            };
            let Some((pr, pc)) = size.pixel_of(&q) else {
                continue;
            };
            mask.set(pr, pc, 1.0);
            let v = disk_map.get(row, col);
            if v > heatmap.get(pr, pc) {
                heatmap.set(pr, pc, v);
            }
        }
    }
    Ok(GroundTruthLabel { heatmap, mask })
}

/// Isotropic Gaussian targets in pixel space, sigma = r / 3, truncated at
/// radius r; overlapping centers take the per-pixel maximum.
pub fn gaussian_heatmap(centers: &[Point2], radii: &[f64], size: ImageSize) -> Result<OccupancyMap> {
    if centers.len() != radii.len() {
        return Err(Error::ShapeMismatch(format!("{} centers but {} radii", centers.len(), radii.len())));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Config(format!("gaussian radius must be positive, got {r}")));
    }
    let mut map = OccupancyMap::zeros_image(size);
    for (c, &r) in centers.iter().zip(radii) {
        let sigma = r / 3.0;
        let denom = 2.0 * sigma * sigma;
        let x0 = (c.x - r).floor().max(0.0) as usize;
        let y0 = (c.y - r).floor().max(0.0) as usize;
        let x1 = ((c.x + r).ceil() as isize).min(size.width as isize - 1);
        let y1 = ((c.y + r).ceil() as isize).min(size.height as isize - 1);
        if x1 < 0 || y1 < 0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let d2 = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                if d2 <= r * r {
                    let v = (-d2 / denom).exp();
                    if v > map.get(y, x) {
                        map.set(y, x, v);
                    }
                }
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone)]
pub struct FocalLoss {
    pub loss: f64,
    pub gradient: OccupancyMap,
}

/// Masked pixel-wise focal loss and its exact gradient with respect to the
/// prediction. Pixels where the prediction had to be clamped get zero
/// gradient, which is the derivative of the clamp.
pub fn focal_loss(pred: &OccupancyMap, label: &GroundTruthLabel, params: &FocalLossParams) -> Result<FocalLoss> {
    if pred.shape() != label.heatmap.shape() || pred.shape() != label.mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?}, heatmap {:?}, mask {:?}",
            pred.shape(),
            label.heatmap.shape(),
            label.mask.shape()
        )));
    }
    let n = label.mask.values().iter().filter(|&&m| m != 0.0).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let inv_n = 1.0 / n as f64;
    let (alpha, beta) = (params.alpha, params.beta);
    let mut total = 0.0;
    let mut grad = vec![0.0; pred.values().len()];
    let iter = pred
        .values()
        .iter()
        .zip(label.heatmap.values())
        .zip(label.mask.values())
        .zip(grad.iter_mut());
    for (((&p_raw, &h), &m), g) in iter {
        if m == 0.0 {
            continue;
        }
        let p = p_raw.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
        let clamped = p != p_raw;
        let (term, dterm) = if h >= 1.0 {
            let q = 1.0 - p;
            let t = q.powf(alpha) * p.ln();
            let dt = -alpha * q.powf(alpha - 1.0) * p.ln() + q.powf(alpha) / p;
            (t, dt)
        } else {
            let w = (1.0 - h).powf(beta);
            let lq = (1.0 - p).ln();
            let t = w * p.powf(alpha) * lq;
            let dt = w * (alpha * p.powf(alpha - 1.0) * lq - p.powf(alpha) / (1.0 - p));
            (t, dt)
        };
        total += m * term;
        if !clamped {
            *g = -m * dterm * inv_n;
        }
    }
    Ok(FocalLoss {
        loss: -total * inv_n,
        gradient: OccupancyMap::from_values(pred.lattice(), grad)?,
    })
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// A ground disk whose edge is softened by a Gaussian of width `sigma`
/// (meters). The radial profile `amplitude * Phi((radius - d) / sigma)` is
/// the one-dimensional edge-spread approximation of a disk convolved with
/// an isotropic Gaussian; it is strictly decreasing in `d`, so a response
/// peaks at its center instead of forming a plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftDisk {
    pub center: Point2,
    pub radius: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl SoftDisk {
    #[inline]
    pub fn value_at(&self, d: f64) -> f64 {
        if self.sigma <= 0.0 {
            if d <= self.radius {
                self.amplitude
            } else {
                0.0
            }
        } else {
            self.amplitude * normal_cdf((self.radius - d) / self.sigma)
        }
    }

    fn support(&self) -> f64 {
        self.radius + 4.0 * self.sigma.max(0.0)
    }
}

/// Renders soft ground disks into a view by inverse-mapping each pixel to
/// the ground, so the response is the perspective-correct ("pre-distorted")
/// disk footprint. Values combine with the per-pixel maximum.
pub fn render_soft_disks(map: &mut OccupancyMap, h: &Homography, disks: &[SoftDisk]) {
    let size = ImageSize::new(map.cols(), map.rows());
    let hinv = h.inverse();
    for disk in disks {
        let Some((x0, y0, x1, y1)) = footprint_bounds(h, size, disk) else {
            continue;
        };
        let support = disk.support();
        for y in y0..=y1 {
            let (yf, row) = (y as f64, y * size.width);
            // Columns of the inverse applied to (x, y, 1), split so the
            // inner loop only adds the x term.
            let bx = hinv[(0, 1)] * yf + hinv[(0, 2)];
            let by = hinv[(1, 1)] * yf + hinv[(1, 2)];
            let bz = hinv[(2, 1)] * yf + hinv[(2, 2)];
            for x in x0..=x1 {
                let xf = x as f64;
                let gz = hinv[(2, 0)] * xf + bz;
                // H (g / g.z) = (x, y, 1) / g.z, so g.z > 0 means in front.
                if gz < W_EPSILON {
                    continue;
                }
                let gx = (hinv[(0, 0)] * xf + bx) / gz;
                let gy = (hinv[(1, 0)] * xf + by) / gz;
                let d = ((gx - disk.center.x).powi(2) + (gy - disk.center.y).powi(2)).sqrt();
                if d > support {
                    continue;
                }
                let v = disk.value_at(d);
                let slot = &mut map.values_mut()[row + x];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }
}

/// Pixel bounding box of a disk's support, clipped to the image.
fn footprint_bounds(h: &Homography, size: ImageSize, disk: &SoftDisk) -> Option<(usize, usize, usize, usize)> {
    const RING: usize = 24;
    let r = disk.support();
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for k in 0..RING {
        let a = k as f64 * std::f64::consts::TAU / RING as f64;
        // Slightly larger ring so the polygon encloses the circle.
        let p = disk.center + crate::geometry::Vector2::new(a.cos(), a.sin()) * (r * 1.01);
        match h.project_unbounded(&p) {
            Some(q) => {
                xmin = xmin.min(q.x);
                ymin = ymin.min(q.y);
                xmax = xmax.max(q.x);
                ymax = ymax.max(q.y);
            }
            // The support straddles the horizon: scan the whole image.
            None => return Some((0, 0, size.width - 1, size.height - 1)),
        }
    }
    let x0 = xmin.floor().max(0.0);
    let y0 = ymin.floor().max(0.0);
    let x1 = xmax.ceil().min(size.width as f64 - 1.0);
    let y1 = ymax.ceil().min(size.height as f64 - 1.0);
    (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// Resamples an image-plane map onto the ground grid; cells that do not
/// project into the view read 0.
pub fn forward_project(image_map: &OccupancyMap, h: &Homography, grid: &GroundGrid, sampling: Sampling) -> Result<OccupancyMap> {
    let Lattice::Image(size) = image_map.lattice() else {
        return Err(Error::ShapeMismatch("forward projection needs an image-plane map".into()));
    };
    let mut out = OccupancyMap::zeros_ground(*grid);
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let Some(q) = h.ground_to_image(&grid.cell_center(row, col)) else {
                continue;
            };
            let v = match sampling {
                Sampling::Nearest => size.pixel_of(&q).map(|(r, c)| image_map.get(r, c)).unwrap_or(0.0),
                Sampling::Bilinear => image_map.sample_bilinear(q.x, q.y),
            };
            out.set(row, col, v);
        }
    }
    Ok(out)
}

/// IoU of the sets `{a > threshold}` and `{b > threshold}`.
pub fn binary_iou(a: &OccupancyMap, b: &OccupancyMap, threshold: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (p, q) = (x > threshold, y > threshold);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Ratio of principal standard deviations of the value-weighted cell
/// distribution; 1 for a round blob. `None` for an empty or degenerate map.
pub fn anisotropy_ratio(map: &OccupancyMap) -> Option<f64> {
    let (mut w, mut mx, mut my) = (0.0, 0.0, 0.0);
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            let v = map.get(r, c).max(0.0);
            w += v;
            mx += v * c as f64;
            my += v * r as f64;
        }
    }
    if w <= 0.0 {
        return None;
    }
    let (mx, my) = (mx / w, my / w);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            let v = map.get(r, c).max(0.0);
            let (dx, dy) = (c as f64 - mx, r as f64 - my);
            sxx += v * dx * dx;
            syy += v * dy * dy;
            sxy += v * dx * dy;
        }
    }
    let (sxx, syy, sxy) = (sxx / w, syy / w, sxy / w);
    let mean = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (mean + disc, mean - disc);
    (l2 > 0.0).then(|| (l1 / l2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraCalibration;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GroundGrid {
        GroundGrid::new(Point2::origin(), 0.025, n, n).unwrap()
    }

    fn brute_disk_count(grid: &GroundGrid, centers: &[Point2], radius: f64) -> usize {
        let mut count = 0;
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let p = grid.cell_center(r, c);
                if centers.iter().any(|k| (p - k).norm() <= radius) {
                    count += 1;
                }
            }
        }
        count
    }

    fn ones(map: &OccupancyMap) -> usize {
        map.values().iter().filter(|&&v| v == 1.0).count()
    }

    #[test]
    fn no_centers_gives_empty_map() {
        let map = disk_occupancy(&grid(20), &[], 0.2).unwrap();
        assert_eq!(ones(&map), 0);
        assert!(disk_occupancy(&grid(20), &[], 0.0).is_err());
    }

    #[test]
    fn centered_disk_matches_cell_count() {
        let g = grid(40);
        let center = Point2::new(0.5, 0.5);
        let radius = 4.0 * g.cell_size;
        let map = disk_occupancy(&g, &[center], radius).unwrap();
        let expected = brute_disk_count(&g, &[center], radius);
        assert_eq!(ones(&map), expected);
        // Grid corner at the center: 8x8 block minus the four corners of each quadrant.
        assert!((ones(&map) as f64 - std::f64::consts::PI * 16.0).abs() < 8.0);
    }

    #[test]
    fn disjoint_disks_add_and_edges_clip() {
        let g = grid(60);
        let a = Point2::new(0.3, 0.3);
        let b = Point2::new(1.1, 1.1);
        let ra = ones(&disk_occupancy(&g, &[a], 0.2).unwrap());
        let rb = ones(&disk_occupancy(&g, &[b], 0.2).unwrap());
        assert_eq!(ones(&disk_occupancy(&g, &[a, b], 0.2).unwrap()), ra + rb);
        let edge = Point2::new(0.0, 0.75);
        let clipped = disk_occupancy(&g, &[edge], 0.2).unwrap();
        assert_eq!(ones(&clipped), brute_disk_count(&g, &[edge], 0.2));
    }

    #[test]
    fn gaussian_peak_and_rim_values() {
        let size = ImageSize::new(64, 64);
        let map = gaussian_heatmap(&[Point2::new(20.0, 30.0)], &[9.0], size).unwrap();
        assert_eq!(map.get(30, 20), 1.0);
        // Pixel exactly r away: exp(-r^2 / (2 (r/3)^2)) = exp(-4.5).
        assert!((map.get(30, 29) - (-4.5f64).exp()).abs() < 1e-12);
        assert_eq!(map.get(30, 30), 0.0);
    }

    #[test]
    fn gaussian_overlap_takes_max() {
        let size = ImageSize::new(40, 20);
        let a = Point2::new(10.0, 10.0);
        let b = Point2::new(16.0, 10.0);
        let map = gaussian_heatmap(&[a, b], &[6.0, 9.0], size).unwrap();
        let ga = (-(9.0) / (2.0 * 4.0f64)).exp();
        let gb = (-(9.0) / (2.0 * 9.0f64)).exp();
        assert!((map.get(10, 13) - ga.max(gb)).abs() < 1e-12);
        assert!(gaussian_heatmap(&[a], &[], size).is_err());
        assert!(gaussian_heatmap(&[a], &[0.0], size).is_err());
    }

    fn overhead_camera(size: ImageSize) -> CameraCalibration {
        // One pixel per cell, looking straight down at the grid center.
        CameraCalibration::new(
            Matrix3::new(120.0, 0.0, 19.5, 0.0, 120.0, 19.5, 0.0, 0.0, 1.0),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            Vector3::new(-0.5, 0.5, 3.0),
            size,
        )
        .unwrap()
    }

    #[test]
    fn empty_disk_map_still_marks_footprint() {
        let g = grid(40);
        let size = ImageSize::new(40, 40);
        let h = overhead_camera(size).homography().unwrap();
        let label = backproject_label(&OccupancyMap::zeros_ground(g), &h, size).unwrap();
        assert_eq!(label.heatmap.max_value(), 0.0);
        assert_eq!(label.mask.values().iter().filter(|&&m| m == 1.0).count(), 40 * 40);
    }

    #[test]
    fn overhead_label_is_pixel_disk() {
        let g = grid(40);
        let size = ImageSize::new(40, 40);
        let cam = overhead_camera(size);
        let h = cam.homography().unwrap();
        let center = Point2::new(0.5, 0.5);
        let disk = disk_occupancy(&g, &[center], 0.2).unwrap();
        let label = backproject_label(&disk, &h, size).unwrap();
        // Oracle: pixel-space disk of radius 0.2 m * 40 px/m around the
        // projected center, tested at pixel centers.
        let pc = h.ground_to_image(&center).unwrap();
        let mut direct = OccupancyMap::zeros_image(size);
        for r in 0..40 {
            for c in 0..40 {
                if ((c as f64 - pc.x).powi(2) + (r as f64 - pc.y).powi(2)).sqrt() <= 8.0 + 1e-9 {
                    direct.set(r, c, 1.0);
                }
            }
        }
        assert_eq!(label.heatmap.values(), direct.values());
    }

    #[test]
    fn heatmap_is_zero_outside_mask() {
        let g = grid(80);
        let size = ImageSize::new(64, 48);
        let cam = CameraCalibration::look_at(Vector3::new(1.0, -2.0, 2.0), Vector3::new(1.0, 1.0, 0.0), 60.0, size).unwrap();
        let h = cam.homography().unwrap();
        let disk = disk_occupancy(&g, &[Point2::new(1.0, 1.0)], 0.3).unwrap();
        let label = backproject_label(&disk, &h, size).unwrap();
        for (&v, &m) in label.heatmap.values().iter().zip(label.mask.values()) {
            assert!(m == 0.0 || m == 1.0);
            assert!(m == 1.0 || v == 0.0);
        }
        assert!(label.heatmap.max_value() == 1.0);
    }

    fn single(p: f64, h: f64, m: f64) -> (OccupancyMap, GroundTruthLabel) {
        let lat = Lattice::Image(ImageSize::new(1, 1));
        (
            OccupancyMap::from_values(lat, vec![p]).unwrap(),
            GroundTruthLabel {
                heatmap: OccupancyMap::from_values(lat, vec![h]).unwrap(),
                mask: OccupancyMap::from_values(lat, vec![m]).unwrap(),
            },
        )
    }

    #[test]
    fn single_positive_pixel_hand_value() {
        let (p, label) = single(0.5, 1.0, 1.0);
        let out = focal_loss(&p, &label, &FocalLossParams::default()).unwrap();
        assert!((out.loss - 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((out.loss - 0.1733).abs() < 1e-4);
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let size = ImageSize::new(16, 16);
        let h: Vec<f64> = (0..256).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let lat = Lattice::Image(size);
        let label = GroundTruthLabel {
            heatmap: OccupancyMap::from_values(lat, h.clone()).unwrap(),
            mask: OccupancyMap::from_values(lat, vec![1.0; 256]).unwrap(),
        };
        let pred = OccupancyMap::from_values(lat, h).unwrap();
        let out = focal_loss(&pred, &label, &FocalLossParams::default()).unwrap();
        assert!(out.loss.abs() < 1e-5);
    }

    #[test]
    fn focal_loss_errors() {
        let (p, mut label) = single(0.5, 1.0, 0.0);
        assert!(matches!(focal_loss(&p, &label, &FocalLossParams::default()), Err(Error::EmptyMask)));
        label.mask = OccupancyMap::zeros_image(ImageSize::new(2, 1));
        assert!(matches!(
            focal_loss(&p, &label, &FocalLossParams::default()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(FocalLossParams::new(0.0, 4.0).is_err());
    }

    #[test]
    fn soft_disk_peaks_at_center() {
        let d = SoftDisk {
            center: Point2::origin(),
            radius: 0.2,
            sigma: 0.05,
            amplitude: 1.0,
        };
        assert!(d.value_at(0.0) > d.value_at(0.025));
        assert!((d.value_at(0.2) - 0.5).abs() < 1e-12);
        let hard = SoftDisk { sigma: 0.0, ..d };
        assert_eq!(hard.value_at(0.2), 1.0);
        assert_eq!(hard.value_at(0.21), 0.0);
    }

    #[test]
    fn rendered_soft_disk_projects_back_to_round_disk() {
        let g = grid(80);
        let size = ImageSize::new(320, 240);
        let cam = CameraCalibration::look_at(Vector3::new(1.0, -1.5, 1.8), Vector3::new(1.0, 1.0, 0.0), 400.0, size).unwrap();
        let h = cam.homography().unwrap();
        let center = Point2::new(1.0, 1.0);
        let mut view = OccupancyMap::zeros_image(size);
        let disk = SoftDisk {
            center,
            radius: 0.2,
            sigma: 0.0,
            amplitude: 1.0,
        };
        render_soft_disks(&mut view, &h, &[disk]);
        let ground = forward_project(&view, &h, &g, Sampling::Nearest).unwrap();
        let truth = disk_occupancy(&g, &[center], 0.2).unwrap();
        assert!(binary_iou(&ground, &truth, 0.5).unwrap() > 0.9);
    }

    #[test]
    fn anisotropy_of_round_and_stretched_blobs() {
        let g = grid(60);
        let round = disk_occupancy(&g, &[Point2::new(0.75, 0.75)], 0.4).unwrap();
        assert!((anisotropy_ratio(&round).unwrap() - 1.0).abs() < 0.02);
        let mut stretched = OccupancyMap::zeros_ground(g);
        for r in 20..40 {
            for c in 25..35 {
                stretched.set(r, c, 1.0);
            }
        }
        assert!((anisotropy_ratio(&stretched).unwrap() - 2.0).abs() < 0.05);
        assert!(anisotropy_ratio(&OccupancyMap::zeros_ground(g)).is_none());
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_mask_gated(
            seed in any::<u64>(),
            poke in 0usize..64,
            value in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lat = Lattice::Image(ImageSize::new(8, 8));
            let p: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let h: Vec<f64> = (0..64).map(|_| if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.0..1.0) }).collect();
            let mut m: Vec<f64> = (0..64).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect();
            m[(poke + 1) % 64] = 1.0;
            let label = GroundTruthLabel {
                heatmap: OccupancyMap::from_values(lat, h).unwrap(),
                mask: OccupancyMap::from_values(lat, m.clone()).unwrap(),
            };
            let pred = OccupancyMap::from_values(lat, p.clone()).unwrap();
            let base = focal_loss(&pred, &label, &FocalLossParams::default()).unwrap();
            prop_assert!(base.loss >= 0.0);
            if m[poke] == 0.0 {
                let mut q = p.clone();
                q[poke] = value;
                let other = focal_loss(&OccupancyMap::from_values(lat, q).unwrap(), &label, &FocalLossParams::default()).unwrap();
                prop_assert_eq!(other.loss, base.loss);
                prop_assert_eq!(base.gradient.values()[poke], 0.0);
            }
        }
    }
}
