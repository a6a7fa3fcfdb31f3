// SPDX-License-Identifier: Apache-2.0

//! Binary PPM (P6) rendering of range images with a ground overlay.

use crate::range_image::RangeImage;
use crate::{Error, GroundMask, Result};

pub const GROUND_RGB: [u8; 3] = [255, 0, 0];

/// One pixel per range-image cell (width = columns, height = rows). Grey is
/// inverse range normalized to the nearest return; pixels whose point is
/// ground in `mask` are red; empty pixels are black.
pub fn render_ppm(image: &RangeImage, mask: Option<&GroundMask>) -> Result<Vec<u8>> {
    if let Some(m) = mask {
        if m.len() != image.source_len() {
            return Err(Error::Dimension {
                expected: format!("mask of {} points", image.source_len()),
                actual: format!("mask of {} points", m.len()),
            });
        }
    }
    let max_inv = image
        .ranges()
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| 1.0 / r as f64)
        .fold(0.0f64, f64::max);
    let header = format!("P6\n{} {}\n255\n", image.cols(), image.rows());
    let mut out = Vec::with_capacity(header.len() + image.rows() * image.cols() * 3);
    out.extend_from_slice(header.as_bytes());
    for row in 0..image.rows() {
        for col in 0..image.cols() {
            let rgb = match image.point_index(row, col) {
                None => [0; 3],
                Some(i) if mask.is_some_and(|m| m.0[i]) => GROUND_RGB,
                Some(_) => {
                    let inv = 1.0 / image.range(row, col) as f64;
                    let g = (255.0 * inv / max_inv).round().clamp(1.0, 255.0) as u8;
                    [g; 3]
                }
            };
            out.extend_from_slice(&rgb);
        }
    }
    Ok(out)
}
