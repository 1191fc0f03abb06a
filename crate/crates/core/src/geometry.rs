//! Pinhole cameras, the metric ground grid, and ground/image projections.
//!
//! World frame is right-handed with z up; the ground plane is z = 0.
//! Camera frames follow the usual computer-vision convention (x right,
//! y down, z forward), so `x_cam = R * X + t` and a point is in front of
//! the camera when its camera-frame z is positive.

use std::path::{Path, PathBuf};

pub use nalgebra::Matrix3;
use nalgebra::{Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = nalgebra::Point2<f64>;
pub type Vector2 = nalgebra::Vector2<f64>;

/// Homogeneous coordinates with |w| below this are treated as at infinity.
pub const W_EPSILON: f64 = 1e-10;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// Pixel centers sit at integer coordinates, so pixel `(c, r)` covers
    /// `[c - 0.5, c + 0.5) x [r - 0.5, r + 0.5)`.
    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= -0.5 && p.y >= -0.5 && p.x < self.width as f64 - 0.5 && p.y < self.height as f64 - 0.5
    }

    /// Index of the pixel containing `p`, if any.
    pub fn pixel_of(&self, p: &Point2) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let col = (p.x + 0.5).floor() as usize;
        let row = (p.y + 0.5).floor() as usize;
        Some((row.min(self.height - 1), col.min(self.width - 1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    size: ImageSize,
}

impl CameraCalibration {
    pub fn new(intrinsics: Matrix3<f64>, rotation: Matrix3<f64>, translation: Vector3<f64>, size: ImageSize) -> Result<Self> {
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidCalibration("intrinsic matrix must be upper-triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return Err(Error::InvalidCalibration("focal lengths and K[2][2] must be positive".into()));
        }
        let deviation = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if !(deviation <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidCalibration(format!(
                "rotation is not orthonormal (max |R R^T - I| = {deviation:e})"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::InvalidCalibration("rotation has determinant -1".into()));
        }
        if size.width == 0 || size.height == 0 {
            return Err(Error::InvalidCalibration("image size must be positive".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCalibration("translation is not finite".into()));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            size,
        })
    }

    /// Camera at `eye` looking at `target`, with square pixels of focal
    /// length `focal` and the principal point at the image center.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, focal: f64, size: ImageSize) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCalibration("eye and target coincide".into()))?;
        let up = if forward.cross(&Vector3::z()).norm() < 1e-9 {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            (size.width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (size.height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::new(intrinsics, rotation, translation, size)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn image_size(&self) -> ImageSize {
        self.size
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Full 3x4 projection `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        self.intrinsics * rt
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, world: &Vector3<f64>) -> f64 {
        (self.rotation * world + self.translation).z
    }

    /// Projects a world point to pixels; `None` when the point is not in
    /// front of the camera. Image bounds are not checked.
    pub fn project(&self, world: &Vector3<f64>) -> Option<Point2> {
        let cam = self.rotation * world + self.translation;
        if cam.z <= W_EPSILON {
            return None;
        }
        let q = self.intrinsics * cam;
        Some(Point2::new(q.x / q.z, q.y / q.z))
    }

    pub fn homography(&self) -> Result<Homography> {
        homography_from_calibration(self)
    }
}

/// Ground-plane to image homography with its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
    size: ImageSize,
}

impl Homography {
    /// `matrix` must be oriented so that the third homogeneous coordinate
    /// of a projected ground point is positive in front of the camera.
    pub fn new(matrix: Matrix3<f64>, size: ImageSize) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateHomography("non-finite entries".into()));
        }
        let scale = matrix.norm();
        if scale == 0.0 {
            return Err(Error::DegenerateHomography("zero matrix".into()));
        }
        let normalized = matrix / scale;
        let det = normalized.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::DegenerateHomography(format!("singular matrix (normalized det = {det:e})")));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::DegenerateHomography("matrix is not invertible".into()))?;
        let residual = (normalized * (inverse * scale) - Matrix3::identity()).abs().max();
        if residual > 1e-9 {
            return Err(Error::DegenerateHomography(format!(
                "ill-conditioned matrix (|H H^-1 - I| = {residual:e})"
            )));
        }
        Ok(Self { matrix, inverse, size })
    }

    pub fn identity(size: ImageSize) -> Self {
        Self {
            matrix: Matrix3::identity(),
            inverse: Matrix3::identity(),
            size,
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn image_size(&self) -> ImageSize {
        self.size
    }

    /// Projects a ground point without checking image bounds. `None` when
    /// the point is behind the camera or at infinity.
    pub fn project_unbounded(&self, p: &Point2) -> Option<Point2> {
        let q = self.matrix * Vector3::new(p.x, p.y, 1.0);
        if q.z < W_EPSILON {
            return None;
        }
        Some(Point2::new(q.x / q.z, q.y / q.z))
    }

    pub fn ground_to_image(&self, p: &Point2) -> Option<Point2> {
        self.project_unbounded(p).filter(|q| self.size.contains(q))
    }

    pub fn image_to_ground(&self, q: &Point2) -> Option<Point2> {
        let g = self.inverse * Vector3::new(q.x, q.y, 1.0);
        if g.z.abs() < W_EPSILON {
            return None;
        }
        let p = Point2::new(g.x / g.z, g.y / g.z);
        // The inverse is sign-ambiguous; re-project to recover the depth sign.
        let w = (self.matrix * Vector3::new(p.x, p.y, 1.0)).z;
        (w > 0.0).then_some(p)
    }

    /// Coefficients `(a, b, c)` of the image line `a u + b v + c = 0` onto
    /// which the ground plane's line at infinity projects.
    pub fn horizon(&self) -> Vector3<f64> {
        self.inverse.row(2).transpose()
    }
}

/// `H = K [r1 r2 t]`, the restriction of the camera projection to z = 0.
pub fn homography_from_calibration(c: &CameraCalibration) -> Result<Homography> {
    let mut m = Matrix3::zeros();
    m.set_column(0, &c.rotation.column(0));
    m.set_column(1, &c.rotation.column(1));
    m.set_column(2, &c.translation);
    Homography::new(c.intrinsics * m, c.size).map_err(|e| match e {
        Error::DegenerateHomography(msg) => Error::DegenerateHomography(format!("camera center lies on the ground plane: {msg}")),
        other => other,
    })
}

/// Regular ground-plane lattice. Row index runs along world y, column
/// index along world x; `origin` is the minimum corner of cell (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GroundGrid {
    pub const DEFAULT_CELL_SIZE: f64 = 0.025;

    pub fn new(origin: Point2, cell_size: f64, rows: usize, cols: usize) -> Result<Self> {
        let grid = Self {
            origin: [origin.x, origin.y],
            cell_size,
            rows,
            cols,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Config(format!("grid cell_size must be positive, got {}", self.cell_size)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid rows and cols must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> Point2 {
        Point2::new(self.origin[0], self.origin[1])
    }

    /// Extent in meters along x and y.
    pub fn extent(&self) -> (f64, f64) {
        (self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_of(&self, p: &Point2) -> Option<(usize, usize)> {
        let col = ((p.x - self.origin[0]) / self.cell_size).floor();
        let row = ((p.y - self.origin[1]) / self.cell_size).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.cell_of(p).is_some()
    }

    /// Continuous (row, col) coordinates with cell centers at integers.
    pub fn to_cell_coords(&self, p: &Point2) -> (f64, f64) {
        (
            (p.y - self.origin[1]) / self.cell_size - 0.5,
            (p.x - self.origin[0]) / self.cell_size - 0.5,
        )
    }
}

/// On-disk calibration: `K` and `R` row-major, `t` in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl From<&CameraCalibration> for CalibrationFile {
    fn from(c: &CameraCalibration) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for r in 0..3 {
                for col in 0..3 {
                    out[r * 3 + col] = m[(r, col)];
                }
            }
            out
        };
        Self {
            k: row_major(&c.intrinsics),
            r: row_major(&c.rotation),
            t: [c.translation.x, c.translation.y, c.translation.z],
            width: c.size.width,
            height: c.size.height,
        }
    }
}

impl TryFrom<CalibrationFile> for CameraCalibration {
    type Error = Error;

    fn try_from(f: CalibrationFile) -> Result<Self> {
        CameraCalibration::new(
            Matrix3::from_row_slice(&f.k),
            Matrix3::from_row_slice(&f.r),
            Vector3::from_row_slice(&f.t),
            ImageSize::new(f.width, f.height),
        )
    }
}

pub fn load_calibration(path: &Path) -> Result<CameraCalibration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let file: CalibrationFile = serde_json::from_str(&text)?;
    file.try_into()
}

pub fn save_calibration(path: &Path, c: &CameraCalibration) -> Result<()> {
    let text = serde_json::to_string_pretty(&CalibrationFile::from(c))?;
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Rig file: ordered camera ids with calibration paths relative to the
/// rig file. Order defines the channel order of stacked fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub cameras: Vec<RigEntry>,
}

#[derive(Debug, Clone)]
pub struct Rig {
    pub ids: Vec<String>,
    pub cameras: Vec<CameraCalibration>,
}

impl Rig {
    pub fn homographies(&self) -> Result<Vec<Homography>> {
        self.cameras.iter().map(homography_from_calibration).collect()
    }
}

pub fn load_rig(path: &Path) -> Result<Rig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let file: RigFile = serde_json::from_str(&text)?;
    if file.cameras.is_empty() {
        return Err(Error::Data(format!("{}: rig lists no cameras", path.display())));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut ids = Vec::with_capacity(file.cameras.len());
    let mut cameras = Vec::with_capacity(file.cameras.len());
    for entry in file.cameras {
        cameras.push(load_calibration(&base.join(&entry.path))?);
        ids.push(entry.id);
    }
    Ok(Rig { ids, cameras })
}

/// Writes one calibration file per camera next to the rig file.
pub fn save_rig(path: &Path, rig: &Rig) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (id, cam) in rig.ids.iter().zip(&rig.cameras) {
        let file = PathBuf::from(format!("{id}.json"));
        save_calibration(&base.join(&file), cam)?;
        entries.push(RigEntry {
            id: id.clone(),
            path: file,
        });
    }
    let text = serde_json::to_string_pretty(&RigFile { cameras: entries })?;
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vga() -> ImageSize {
        ImageSize::new(640, 480)
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> CameraCalibration {
        let eye = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(2.0..8.0));
        let target = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0);
        CameraCalibration::look_at(eye, target, rng.random_range(300.0..900.0), vga()).unwrap()
    }

    #[test]
    fn identity_homography_maps_points_to_themselves() {
        let h = Homography::identity(vga());
        assert_eq!(h.ground_to_image(&Point2::new(0.0, 0.0)), Some(Point2::new(0.0, 0.0)));
        assert_eq!(h.image_to_ground(&Point2::new(5.0, 7.0)), Some(Point2::new(5.0, 7.0)));
    }

    #[test]
    fn downward_camera_sees_point_below_at_principal_point() {
        let cam = CameraCalibration::new(
            Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            Vector3::new(-1.0, 2.0, 3.0),
            vga(),
        )
        .unwrap();
        let center = cam.center();
        assert_relative_eq!(center, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        let h = cam.homography().unwrap();
        let q = h.ground_to_image(&Point2::new(1.0, 2.0)).unwrap();
        assert_relative_eq!(q, Point2::new(320.0, 240.0), epsilon = 1e-9);
    }

    #[test]
    fn identity_pose_homography_columns() {
        let cam = CameraCalibration::new(Matrix3::identity(), Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0), vga()).unwrap();
        let h = cam.homography().unwrap();
        assert_eq!(*h.matrix(), Matrix3::identity());
    }

    #[test]
    fn downward_camera_homography_is_scaled_translation() {
        // Looking straight down from 3 m with K = I: a ground point (x, y)
        // lands at (x - cx, -(y - cy)) / 3 in normalized coordinates.
        let cam = CameraCalibration::new(
            Matrix3::identity(),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            Vector3::new(0.0, 0.0, 3.0),
            ImageSize::new(10, 10),
        )
        .unwrap();
        let h = cam.homography().unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 3.0);
        assert_relative_eq!(*h.matrix(), expected, epsilon = 1e-12);
        let p = h.project_unbounded(&Point2::origin()).unwrap();
        let full = cam.projection_matrix() * nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(p, Point2::new(full.x / full.z, full.y / full.z), epsilon = 1e-12);
    }

    #[test]
    fn homography_agrees_with_full_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cam = random_camera(&mut rng);
            let h = cam.homography().unwrap();
            let p = cam.projection_matrix();
            for _ in 0..100 {
                let g = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                let full = p * nalgebra::Vector4::new(g.x, g.y, 0.0, 1.0);
                let hom = h.matrix() * Vector3::new(g.x, g.y, 1.0);
                // Same homogeneous vector, not just the same pixel.
                let rel = (full - hom).norm() / full.norm();
                assert!(rel < 1e-9, "relative error {rel}");
            }
        }
    }

    #[test]
    fn round_trip_image_ground_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..10 {
            let cam = random_camera(&mut rng);
            let h = cam.homography().unwrap();
            for _ in 0..100 {
                let q = Point2::new(rng.random_range(0.0..639.0), rng.random_range(0.0..479.0));
                if let Some(g) = h.image_to_ground(&q) {
                    let back = h.ground_to_image(&g).unwrap();
                    assert!((back - q).norm() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn ground_cell_center_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = GroundGrid::new(Point2::new(-2.0, -2.0), 0.025, 160, 160).unwrap();
        let cam = random_camera(&mut rng);
        let h = cam.homography().unwrap();
        for _ in 0..200 {
            let (r, c) = (rng.random_range(0..160), rng.random_range(0..160));
            let g = grid.cell_center(r, c);
            if let Some(q) = h.ground_to_image(&g) {
                let back = h.image_to_ground(&q).unwrap();
                assert!((back - g).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn horizon_pixel_is_invalid() {
        let cam = CameraCalibration::look_at(Vector3::new(0.0, -5.0, 3.0), Vector3::new(0.0, 5.0, 1.0), 500.0, vga()).unwrap();
        let h = cam.homography().unwrap();
        let line = h.horizon();
        // Solve a u + b v + c = 0 for v at the image center column.
        let u = 319.5;
        let v = -(line.x * u + line.z) / line.y;
        assert!(h.image_to_ground(&Point2::new(u, v)).is_none());
        // Just below the horizon the ray hits the ground far away.
        let near = h.image_to_ground(&Point2::new(u, v + 2.0)).unwrap();
        assert!(near.y > 50.0);
        // Above the horizon the inverse lands behind the camera.
        assert!(h.image_to_ground(&Point2::new(u, v - 2.0)).is_none());
    }

    #[test]
    fn point_behind_camera_is_out_of_view() {
        let cam = CameraCalibration::look_at(Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.0, 5.0, 0.0), 500.0, vga()).unwrap();
        let h = cam.homography().unwrap();
        assert!(h.ground_to_image(&Point2::new(0.0, -5.0)).is_none());
        assert!(h.ground_to_image(&Point2::new(0.0, 5.0)).is_some());
    }

    #[test]
    fn camera_on_ground_plane_is_degenerate() {
        let cam = CameraCalibration::look_at(Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 5.0, 0.0), 500.0, vga()).unwrap();
        assert!(matches!(cam.homography(), Err(Error::DegenerateHomography(_))));
    }

    #[test]
    fn rejects_bad_calibrations() {
        let k = Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0);
        let skew_r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraCalibration::new(k, skew_r, Vector3::zeros(), vga()).is_err());
        let lower = Matrix3::new(500.0, 0.0, 0.0, 3.0, 500.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraCalibration::new(lower, Matrix3::identity(), Vector3::zeros(), vga()).is_err());
        let neg = Matrix3::new(-500.0, 0.0, 0.0, 0.0, 500.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraCalibration::new(neg, Matrix3::identity(), Vector3::zeros(), vga()).is_err());
    }

    #[test]
    fn grid_cell_lookup() {
        let grid = GroundGrid::new(Point2::new(1.0, 2.0), 0.5, 4, 6).unwrap();
        assert_eq!(grid.cell_center(0, 0), Point2::new(1.25, 2.25));
        assert_eq!(grid.cell_of(&Point2::new(1.26, 3.9)), Some((3, 0)));
        assert_eq!(grid.cell_of(&Point2::new(0.99, 2.1)), None);
        assert_eq!(grid.cell_of(&Point2::new(4.0, 2.1)), None);
        assert!(GroundGrid::new(Point2::origin(), 0.0, 4, 4).is_err());
    }

    #[test]
    fn calibration_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cam = random_camera(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let rig = Rig {
            ids: vec!["a".into(), "b".into()],
            cameras: vec![cam.clone(), random_camera(&mut rng)],
        };
        let path = dir.path().join("rig.json");
        save_rig(&path, &rig).unwrap();
        let loaded = load_rig(&path).unwrap();
        assert_eq!(loaded.ids, rig.ids);
        assert_relative_eq!(*loaded.cameras[0].rotation(), *cam.rotation(), epsilon = 1e-15);
    }
}
