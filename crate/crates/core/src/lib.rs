// SPDX-License-Identifier: Apache-2.0

//! Ground segmentation for LiDAR point clouds under frame slicing.
//!
//! A frame (a mechanical scan or an organized solid-state frame) is cut into
//! `K` equal column / azimuth slices, each slice is segmented independently by
//! one of three algorithm families, and the per-slice results are merged back
//! into a per-point [`GroundMask`]:
//!
//! - [`depth`]: range-image elevation-angle ground labeling (angle image,
//!   Savitzky-Golay smoothing, BFS propagation from bottom-row seeds).
//! - [`ransac`]: plane fitting with a gravity-aligned normal constraint.
//! - [`smrf`]: Simple Morphological Filter on a minimum-elevation raster.
//!
//! [`parallel`] distributes slices over processing units and guarantees the
//! merged mask does not depend on the number of units. [`eval`] scores masks
//! with IoU / F1.

pub mod depth;
pub mod error;
pub mod eval;
pub mod kitti;
pub mod mask;
pub mod parallel;
pub mod range_image;
pub mod ransac;
pub mod render;
pub mod sim;
pub mod smrf;
pub mod ssl;

mod cloud;

pub use cloud::{Point, PointCloud};
pub use error::{Error, Result};
pub use mask::GroundMask;
