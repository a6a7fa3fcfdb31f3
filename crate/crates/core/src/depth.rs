// SPDX-License-Identifier: Apache-2.0

//! Range-image ground labeling by elevation angle.
//!
//! Per column, the inclination between consecutive valid returns is computed
//! bottom-up, smoothed along the column with a Savitzky-Golay filter, and ground
//! is grown by BFS from low-angle seeds in the bottom-most valid pixel of each
//! column.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::range_image::{ImageView, PixelMask, RangeImage};
use crate::{Error, GroundMask, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthParams {
    pub seed_threshold_deg: f64,
    pub propagation_threshold_deg: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    /// Height of the sensor above the ground, meters. The virtual ground point
    /// used to seed each column sits this far below the sensor origin.
    pub sensor_height: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self {
            seed_threshold_deg: 5.0,
            propagation_threshold_deg: 5.0,
            sg_window: 5,
            sg_order: 2,
            sensor_height: 1.73,
        }
    }
}

impl DepthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_threshold_deg > 0.0 && self.propagation_threshold_deg > 0.0) {
            return Err(Error::config("depth thresholds must be positive"));
        }
        check_sg(self.sg_window, self.sg_order)?;
        if !self.sensor_height.is_finite() {
            return Err(Error::config("sensor height must be finite"));
        }
        Ok(())
    }
}

/// Inclination per pixel, radians in `[0, pi/2]`; undefined where `valid` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleImage {
    pub rows: usize,
    pub cols: usize,
    pub angle: Vec<f64>,
    pub valid: Vec<bool>,
}

impl AngleImage {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            angle: vec![0.0; rows * cols],
            valid: vec![false; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let p = row * self.cols + col;
        self.valid[p].then(|| self.angle[p])
    }

    pub fn set(&mut self, row: usize, col: usize, angle: f64) {
        let p = row * self.cols + col;
        self.angle[p] = angle;
        self.valid[p] = true;
    }

    fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }
}

/// Inclination between consecutive valid returns of each column, walking from
/// the bottom row up. The lowest valid return is paired with a virtual ground
/// point `sensor_height` below the sensor.
pub fn compute_angle_image(view: &ImageView<'_>, sensor_height: f64) -> AngleImage {
    let mut out = AngleImage::new(view.rows(), view.cols());
    for col in 0..view.cols() {
        let mut prev = (0.0f64, -sensor_height);
        for row in (0..view.rows()).rev() {
            if view.is_empty_pixel(row, col) {
                continue;
            }
            let [x, y, z] = view.xyz(row, col).map(f64::from);
            let cur = (x.hypot(y), z);
            out.set(row, col, (cur.1 - prev.1).abs().atan2((cur.0 - prev.0).abs()));
            prev = cur;
        }
    }
    out
}

fn check_sg(window: usize, order: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::config(format!("Savitzky-Golay window must be odd and >= 3, got {window}")));
    }
    if order < 1 || order >= window {
        return Err(Error::config(format!(
            "Savitzky-Golay order must be in 1..{window}, got {order}"
        )));
    }
    Ok(())
}

/// Least-squares polynomial of degree `order` through `(offsets, values)`,
/// evaluated at offset 0. Solves the normal equations with partial pivoting.
fn fit_at_zero(offsets: &[f64], values: &[f64], order: usize) -> f64 {
    let m = order + 1;
    let mut a = vec![vec![0.0f64; m + 1]; m];
    for (&t, &v) in offsets.iter().zip(values) {
        let mut pow = vec![1.0f64; 2 * m - 1];
        for k in 1..pow.len() {
            pow[k] = pow[k - 1] * t;
        }
        for i in 0..m {
            for j in 0..m {
                a[i][j] += pow[i + j];
            }
            a[i][m] += pow[i] * v;
        }
    }
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            for k in c..=m {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut coef = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r][k] * coef[k]).sum();
        coef[r] = (a[r][m] - s) / a[r][r];
    }
    coef[0]
}

/// Convolution weights of the full symmetric window.
fn sg_coefficients(window: usize, order: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let offsets: Vec<f64> = (-half..=half).map(|t| t as f64).collect();
    (0..window)
        .map(|j| {
            let mut impulse = vec![0.0; window];
            impulse[j] = 1.0;
            fit_at_zero(&offsets, &impulse, order)
        })
        .collect()
}

/// Smooths each column of valid angles. Where the full window is valid the
/// fixed Savitzky-Golay weights apply; windows clipped by the column ends or by
/// invalid pixels are refit over the valid samples they contain (degree capped
/// at samples - 1). A lone sample passes through unchanged.
pub fn savitzky_golay_smooth(angles: &AngleImage, window: usize, order: usize) -> Result<AngleImage> {
    check_sg(window, order)?;
    let half = window / 2;
    let weights = sg_coefficients(window, order);
    let mut out = angles.clone();
    let mut offsets = Vec::with_capacity(window);
    let mut values = Vec::with_capacity(window);
    for col in 0..angles.cols {
        let column: Vec<Option<f64>> = angles.column(col).collect();
        for row in 0..angles.rows {
            if column[row].is_none() {
                continue;
            }
            offsets.clear();
            values.clear();
            let lo = row.saturating_sub(half);
            let hi = (row + half).min(angles.rows - 1);
            for (r, v) in column.iter().enumerate().take(hi + 1).skip(lo) {
                if let Some(v) = v {
                    offsets.push(r as f64 - row as f64);
                    values.push(*v);
                }
            }
            let smoothed = if values.len() == window {
                weights.iter().zip(&values).map(|(w, v)| w * v).sum()
            } else if values.len() >= 2 {
                fit_at_zero(&offsets, &values, order.min(values.len() - 1))
            } else {
                continue;
            };
            out.angle[row * angles.cols + col] = smoothed;
        }
    }
    Ok(out)
}

/// Grows ground from seeds (the lowest valid pixel of each column, if its angle
/// is below `seed_threshold`) over 4-connected valid pixels. Within a column the
/// vertical neighbors are the nearest valid pixels above and below, the same
/// pairing the angles were computed over, so rows left empty by angle binning
/// do not cut a column. A neighbor joins when its angle differs from the
/// current pixel's by less than `propagation_threshold` and stays below
/// `seed_threshold + propagation_threshold`.
pub fn bfs_ground_label(angles: &AngleImage, seed_threshold: f64, propagation_threshold: f64) -> PixelMask {
    let (rows, cols) = (angles.rows, angles.cols);
    let valid = |r: usize, c: usize| angles.valid[r * cols + c];
    let mut mask = PixelMask::new(rows, cols);
    let mut queue = VecDeque::new();
    for col in 0..cols {
        if let Some(row) = (0..rows).rev().find(|&r| valid(r, col)) {
            if angles.angle[row * cols + col] < seed_threshold {
                mask.set(row, col, true);
                queue.push_back((row, col));
            }
        }
    }
    let ceiling = seed_threshold + propagation_threshold;
    while let Some((row, col)) = queue.pop_front() {
        let here = angles.angle[row * cols + col];
        let above = (0..row).rev().find(|&r| valid(r, col)).map(|r| (r, col));
        let below = (row + 1..rows).find(|&r| valid(r, col)).map(|r| (r, col));
        let left = col.checked_sub(1).map(|c| (row, c));
        let right = (col + 1 < cols).then_some((row, col + 1));
        for (r, c) in [above, below, left, right].into_iter().flatten() {
            if mask.get(r, c) {
                continue;
            }
            let Some(a) = angles.get(r, c) else { continue };
            if (a - here).abs() < propagation_threshold && a < ceiling {
                mask.set(r, c, true);
                queue.push_back((r, c));
            }
        }
    }
    mask
}

/// Full depth-ground pipeline on one view.
pub fn segment_view(view: &ImageView<'_>, params: &DepthParams) -> Result<PixelMask> {
    params.validate()?;
    let angles = compute_angle_image(view, params.sensor_height);
    let smoothed = savitzky_golay_smooth(&angles, params.sg_window, params.sg_order)?;
    Ok(bfs_ground_label(
        &smoothed,
        params.seed_threshold_deg.to_radians(),
        params.propagation_threshold_deg.to_radians(),
    ))
}

pub fn depth_ground(image: &RangeImage, params: &DepthParams) -> Result<GroundMask> {
    let pixels = segment_view(&image.full_view(), params)?;
    image.pixel_to_point_mask(&pixels)
}
