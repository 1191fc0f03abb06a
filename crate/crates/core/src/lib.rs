//! Multi-camera people tracking on a shared ground plane.
//!
//! Per-view ground-point heatmaps are projected onto a metric ground grid
//! and fused into an occupancy map. Local maxima of that map become
//! proposals, a temporal glimpse classifier filters them, and an online
//! min-cost max-flow tracker links the survivors into trajectories. A
//! synthetic multi-camera simulator and a CLEAR-MOT / identity metrics
//! suite close the loop.

// `!(x >= 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appearance;
pub mod detect;
pub mod error;
pub mod flow;
pub mod fusion;
pub mod geometry;
pub mod glimpse;
pub mod heatmap;
pub mod metrics;
pub mod occupancy;
pub mod pipeline;
pub mod records;
pub mod sim;
pub mod tracker;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{CameraCalibration, GroundGrid, Homography, Point2, Vector2};
pub use occupancy::OccupancyMap;
