//! C ABI over the mctrack engine.
//!
//! Objects are opaque handles created by `mct_*_new` and released by the
//! matching `mct_*_free`. Every fallible call returns an [`MctStatus`]; on
//! failure a message is kept per thread and can be read with
//! [`mct_last_error_message`]. Panics never cross the boundary.

// `!(x >= 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mctrack::appearance::ColorHistogram;
use mctrack::detect::local_maxima;
use mctrack::fusion::Fuser;
use mctrack::geometry::{GroundGrid, Homography, ImageSize};
use mctrack::heatmap::{focal_loss, FocalLossParams, GroundTruthLabel};
use mctrack::occupancy::Lattice;
use mctrack::tracker::{TrackInput, Tracker, TrackerParams};
use mctrack::{Error, ErrorKind, OccupancyMap, Point2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MctStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidData = 3,
    Runtime = 4,
    /// Output buffer too small; the required length was still written.
    BufferTooSmall = 5,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MctStatus {
    match e.kind() {
        ErrorKind::Config => MctStatus::InvalidConfig,
        ErrorKind::Data => MctStatus::InvalidData,
        ErrorKind::Runtime => MctStatus::Runtime,
    }
}

/// Internal failure carrying the status to report.
struct Fail(MctStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MctStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MctStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MctStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MctStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `mct_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mct_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MctTrackerParams {
    /// Gating radius d_L in meters.
    pub gate_radius: f64,
    /// Miss-edge cost as a fraction of the gating radius.
    pub miss_penalty_ratio: f64,
    /// Consecutive misses before a trajectory is retired.
    pub max_misses: u32,
    /// Non-zero to mix histogram similarity into the edge cost.
    pub use_color: u8,
    pub color_weight: f64,
    pub velocity_decay: f64,
}

impl From<TrackerParams> for MctTrackerParams {
    fn from(p: TrackerParams) -> Self {
        Self {
            gate_radius: p.gate_radius,
            miss_penalty_ratio: p.miss_penalty_ratio,
            max_misses: p.max_misses,
            use_color: p.use_color as u8,
            color_weight: p.color_weight,
            velocity_decay: p.velocity_decay,
        }
    }
}

impl From<MctTrackerParams> for TrackerParams {
    fn from(p: MctTrackerParams) -> Self {
        Self {
            gate_radius: p.gate_radius,
            miss_penalty_ratio: p.miss_penalty_ratio,
            max_misses: p.max_misses,
            use_color: p.use_color != 0,
            color_weight: p.color_weight,
            velocity_decay: p.velocity_decay,
        }
    }
}

/// One exported trajectory state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MctTrackRow {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    /// 1 when a detection was assigned this frame, 0 when coasting.
    pub matched: u8,
}

/// Opaque online tracker.
pub struct MctTracker {
    inner: Tracker,
    include_coasted: bool,
}

#[no_mangle]
pub extern "C" fn mct_tracker_params_default() -> MctTrackerParams {
    TrackerParams::default().into()
}

/// Creates a tracker. `include_coasted` non-zero also reports trajectories
/// that were not matched this frame.
///
/// # Safety
/// `params` must point to a valid struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mct_tracker_new(params: *const MctTrackerParams, include_coasted: u8, out: *mut *mut MctTracker) -> MctStatus {
    guard(|| {
        if params.is_null() {
            return Err(null("params"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Tracker::new((*params).into())?;
        *out = Box::into_raw(Box::new(MctTracker {
            inner,
            include_coasted: include_coasted != 0,
        }));
        Ok(())
    })
}

/// # Safety
/// `tracker` must be null or a handle from [`mct_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mct_tracker_free(tracker: *mut MctTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Advances the tracker by one frame.
///
/// `xy` holds `n` interleaved ground positions (meters). With color on,
/// `histograms` holds `n * bins^3` normalized bins; otherwise pass null
/// and 0. Rows are written to `out` (capacity `cap`) and their count to
/// `out_len`; when `cap` is too small the step is still applied, `out_len`
/// receives the required count and `BufferTooSmall` is returned.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mct_tracker_step(
    tracker: *mut MctTracker,
    frame: u64,
    xy: *const f64,
    n: usize,
    histograms: *const f64,
    bins: usize,
    out: *mut MctTrackRow,
    cap: usize,
    out_len: *mut usize,
) -> MctStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let coords = slice_in(
            xy,
            n.checked_mul(2).ok_or_else(|| Fail(MctStatus::InvalidData, "n too large".into()))?,
            "xy",
        )?;
        let hist = if histograms.is_null() {
            None
        } else {
            let per = bins
                .checked_pow(3)
                .ok_or_else(|| Fail(MctStatus::InvalidConfig, "bins too large".into()))?;
            Some((slice_in(histograms, n * per, "histograms")?, per))
        };
        let inputs: Vec<TrackInput> = (0..n)
            .map(|i| TrackInput {
                position: Point2::new(coords[2 * i], coords[2 * i + 1]),
                appearance: hist.map(|(h, per)| ColorHistogram {
                    bins,
                    counts: h[i * per..(i + 1) * per].to_vec(),
                    empty: h[i * per..(i + 1) * per].iter().all(|&v| v == 0.0),
                }),
            })
            .collect();
        t.inner.step(frame, &inputs)?;
        let rows = t.inner.rows(frame, t.include_coasted);
        *out_len = rows.len();
        if rows.len() > cap {
            return Err(Fail(MctStatus::BufferTooSmall, format!("{} rows do not fit in {cap}", rows.len())));
        }
        let dst = slice_out(out, rows.len(), "out")?;
        for (d, r) in dst.iter_mut().zip(&rows) {
            *d = MctTrackRow {
                id: r.id,
                x: r.x_m,
                y: r.y_m,
                matched: r.matched,
            };
        }
        Ok(())
    })
}

/// Ground grid description.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MctGrid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

/// Opaque fuser with its cached ground-to-image lookup.
pub struct MctFuser {
    inner: Fuser,
    sizes: Vec<ImageSize>,
}

/// Creates a fuser for `n` cameras. `homographies` holds `n` row-major 3×3
/// ground-to-image matrices; `widths`/`heights` the image sizes.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mct_fuser_new(
    homographies: *const f64,
    widths: *const usize,
    heights: *const usize,
    n: usize,
    grid: MctGrid,
    out: *mut *mut MctFuser,
) -> MctStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hs = slice_in(homographies, n * 9, "homographies")?;
        let ws = slice_in(widths, n, "widths")?;
        let hts = slice_in(heights, n, "heights")?;
        let sizes: Vec<ImageSize> = ws.iter().zip(hts).map(|(&w, &h)| ImageSize::new(w, h)).collect();
        let homs = (0..n)
            .map(|i| Homography::new(mctrack::geometry::Matrix3::from_row_slice(&hs[9 * i..9 * i + 9]), sizes[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let g = GroundGrid::new(Point2::new(grid.origin_x, grid.origin_y), grid.cell_size, grid.rows, grid.cols)?;
        let inner = Fuser::new(homs, g)?;
        *out = Box::into_raw(Box::new(MctFuser { inner, sizes }));
        Ok(())
    })
}

/// # Safety
/// `fuser` must be null or a handle from [`mct_fuser_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mct_fuser_free(fuser: *mut MctFuser) {
    if !fuser.is_null() {
        drop(Box::from_raw(fuser));
    }
}

/// Averages one row-major heatmap per camera onto the grid. `out` must hold
/// `rows * cols` values. `coverage`, if not null, receives the number of
/// cameras seeing each cell.
///
/// # Safety
/// `heatmaps` must hold `n` pointers, each valid for its camera's
/// `width * height` values; `out` and `coverage` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn mct_fuser_fuse_average(
    fuser: *const MctFuser,
    heatmaps: *const *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
    coverage: *mut u16,
) -> MctStatus {
    guard(|| {
        let f = fuser.as_ref().ok_or_else(|| null("fuser"))?;
        if n != f.sizes.len() {
            return Err(Fail(MctStatus::InvalidData, format!("{n} heatmaps for {} cameras", f.sizes.len())));
        }
        let ptrs = slice_in(heatmaps, n, "heatmaps")?;
        let maps = ptrs
            .iter()
            .zip(&f.sizes)
            .map(|(&p, &size)| {
                let v = slice_in(p, size.width * size.height, "heatmap")?;
                Ok(OccupancyMap::from_values(Lattice::Image(size), v.to_vec())?)
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let fused = f.inner.fuse_average(&maps)?;
        let cells = f.inner.grid().len();
        if out_len != cells {
            return Err(Fail(
                MctStatus::BufferTooSmall,
                format!("output holds {out_len} values, grid has {cells}"),
            ));
        }
        slice_out(out, cells, "out")?.copy_from_slice(fused.mean.values());
        if !coverage.is_null() {
            slice_out(coverage, cells, "coverage")?.copy_from_slice(&fused.coverage);
        }
        Ok(())
    })
}

/// Masked focal loss (mean over masked pixels) and its gradient with
/// respect to `pred`. All arrays hold `len` values; `grad` may be null.
///
/// # Safety
/// Pointers must be valid for `len` elements; `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mct_focal_loss(
    pred: *const f64,
    target: *const f64,
    mask: *const f64,
    len: usize,
    alpha: f64,
    beta: f64,
    loss: *mut f64,
    grad: *mut f64,
) -> MctStatus {
    guard(|| {
        if loss.is_null() {
            return Err(null("loss"));
        }
        let size = ImageSize::new(len, 1);
        let mk = |p: *const f64, what: &str| -> Result<OccupancyMap, Fail> {
            Ok(OccupancyMap::from_values(Lattice::Image(size), slice_in(p, len, what)?.to_vec())?)
        };
        let params = FocalLossParams::new(alpha, beta)?;
        let label = GroundTruthLabel {
            heatmap: mk(target, "target")?,
            mask: mk(mask, "mask")?,
        };
        let r = focal_loss(&mk(pred, "pred")?, &label, &params)?;
        *loss = r.loss;
        if !grad.is_null() {
            slice_out(grad, len, "grad")?.copy_from_slice(r.gradient.values());
        }
        Ok(())
    })
}

/// Peak found by [`mct_local_maxima`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MctPeak {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// Local maxima of a row-major `rows × cols` map, strongest first.
/// Semantics of `out`/`cap`/`out_len` follow [`mct_tracker_step`].
///
/// # Safety
/// `values` must hold `rows * cols` elements; `out` `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn mct_local_maxima(
    values: *const f64,
    rows: usize,
    cols: usize,
    min_score: f64,
    min_separation_cells: f64,
    out: *mut MctPeak,
    cap: usize,
    out_len: *mut usize,
) -> MctStatus {
    guard(|| {
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        if rows == 0 || cols == 0 {
            return Err(Fail(MctStatus::InvalidData, "map is empty".into()));
        }
        if !(min_separation_cells >= 0.0) {
            return Err(Fail(MctStatus::InvalidConfig, "min separation must be non-negative".into()));
        }
        let v = slice_in(values, rows * cols, "values")?;
        let map = OccupancyMap::from_values(Lattice::Image(ImageSize::new(cols, rows)), v.to_vec())?;
        let peaks = local_maxima(&map, min_score, min_separation_cells);
        *out_len = peaks.len();
        if peaks.len() > cap {
            return Err(Fail(
                MctStatus::BufferTooSmall,
                format!("{} peaks do not fit in {cap}", peaks.len()),
            ));
        }
        let dst = slice_out(out, peaks.len(), "out")?;
        for (d, p) in dst.iter_mut().zip(&peaks) {
            *d = MctPeak {
                row: p.row,
                col: p.col,
                score: p.score,
            };
        }
        Ok(())
    })
}
