// SPDX-License-Identifier: Apache-2.0

//! Simple Morphological Filter (SMRF).
//!
//! 1. Rasterize the minimum elevation per cell; fill empty cells from the
//!    nearest occupied cell.
//! 2. Open the surface with disks of radius 1..=max; cells that drop by more
//!    than `slope * radius * cell_size` are flagged non-ground and take the
//!    opened elevation.
//! 3. Points within an elevation tolerance of the resulting bare-earth surface
//!    are ground. The tolerance grows with the local surface gradient.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, GroundMask, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmrfParams {
    pub cell_size: f64,
    pub max_window_radius: usize,
    pub slope: f64,
    pub elevation_threshold: f64,
    pub elevation_scale: f64,
}

impl Default for SmrfParams {
    fn default() -> Self {
        Self {
            cell_size: 0.5,
            max_window_radius: 18,
            slope: 0.15,
            elevation_threshold: 0.5,
            elevation_scale: 1.25,
        }
    }
}

impl SmrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::config("SMRF cell size must be positive"));
        }
        if self.max_window_radius == 0 {
            return Err(Error::config("SMRF max window radius must be at least 1"));
        }
        if !(self.slope >= 0.0 && self.elevation_threshold >= 0.0 && self.elevation_scale >= 0.0) {
            return Err(Error::config("SMRF slope and elevation thresholds must be non-negative"));
        }
        Ok(())
    }
}

/// Elevation raster. Row `r`, column `c` covers
/// `x in [origin.x + c*cell, origin.x + (c+1)*cell)` and likewise for `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub z: Vec<f64>,
}

impl Raster {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.z[row * self.width + col]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin[0]) / self.cell_size).floor();
        let r = ((y - self.origin[1]) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 || c.is_nan() || r.is_nan() {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Gradient magnitude from forward differences; the neighbor index is
    /// clamped at the far edges, giving a zero difference there.
    pub fn slope_at(&self, row: usize, col: usize) -> f64 {
        let here = self.at(row, col);
        let gx = (self.at(row, (col + 1).min(self.width - 1)) - here) / self.cell_size;
        let gy = (self.at((row + 1).min(self.height - 1), col) - here) / self.cell_size;
        gx.hypot(gy)
    }
}

/// Minimum-elevation surface with occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct SmrfGrid {
    pub surface: Raster,
    pub occupied: Vec<bool>,
    pub inpainted: Vec<bool>,
}

pub fn rasterize_min_surface(cloud: &PointCloud, cell_size: f64) -> Result<SmrfGrid> {
    if !(cell_size > 0.0) {
        return Err(Error::config("cell size must be positive"));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in cloud.iter() {
        for (k, v) in [p.x as f64, p.y as f64].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let width = ((hi[0] - lo[0]) / cell_size).floor() as usize + 1;
    let height = ((hi[1] - lo[1]) / cell_size).floor() as usize + 1;
    let mut surface = Raster {
        cell_size,
        origin: lo,
        width,
        height,
        z: vec![f64::INFINITY; width * height],
    };
    let mut occupied = vec![false; width * height];
    for p in cloud.iter() {
        let (r, c) = surface.cell_of(p.x as f64, p.y as f64).expect("point inside its own bounds");
        let i = r * width + c;
        occupied[i] = true;
        surface.z[i] = surface.z[i].min(p.z as f64);
    }
    let inpainted = inpaint_nearest(&mut surface, &occupied);
    Ok(SmrfGrid {
        surface,
        occupied,
        inpainted,
    })
}

/// Fills every unoccupied cell with the elevation of the nearest occupied cell
/// (cell-center distance; ties take the lower elevation). Square rings are
/// scanned outward until no closer cell can exist.
fn inpaint_nearest(surface: &mut Raster, occupied: &[bool]) -> Vec<bool> {
    let (w, h) = (surface.width as isize, surface.height as isize);
    let src = surface.z.clone();
    let mut inpainted = vec![false; occupied.len()];
    let limit = w.max(h);
    for r in 0..h {
        for c in 0..w {
            let i = (r * w + c) as usize;
            if occupied[i] {
                continue;
            }
            let mut best: Option<(isize, f64)> = None;
            let consider = |rr: isize, cc: isize, best: &mut Option<(isize, f64)>| {
                if rr < 0 || cc < 0 || rr >= h || cc >= w {
                    return;
                }
                let j = (rr * w + cc) as usize;
                if !occupied[j] {
                    return;
                }
                let d2 = (rr - r).pow(2) + (cc - c).pow(2);
                let z = src[j];
                match best {
                    Some((bd, bz)) if d2 > *bd || (d2 == *bd && z >= *bz) => {}
                    _ => *best = Some((d2, z)),
                }
            };
            for ring in 1..=limit {
                if best.is_some_and(|(d2, _)| ring * ring > d2) {
                    break;
                }
                for k in -ring..=ring {
                    consider(r - ring, c + k, &mut best);
                    consider(r + ring, c + k, &mut best);
                }
                for k in -ring + 1..ring {
                    consider(r + k, c - ring, &mut best);
                    consider(r + k, c + ring, &mut best);
                }
            }
            if let Some((_, z)) = best {
                surface.z[i] = z;
                inpainted[i] = true;
            }
        }
    }
    inpainted
}

/// Half-widths of the horizontal runs composing a disk of `radius` cells: the
/// entry at `dy + radius` is the largest `dx` with `dx^2 + dy^2 <= radius^2`.
pub fn disk_runs(radius: usize) -> Vec<usize> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| {
            let mut dx = 0i64;
            while (dx + 1).pow(2) + dy * dy <= r * r {
                dx += 1;
            }
            dx as usize
        })
        .collect()
}

/// Windowed min (or max) over `[i - half, i + half]` clipped to the row.
fn sliding_extreme(row: &[f64], half: usize, take_max: bool, out: &mut [f64]) {
    let n = row.len();
    let better = |a: f64, b: f64| if take_max { a >= b } else { a <= b };
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&j| better(row[next], row[j])) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&j| j + half < i) {
            dq.pop_front();
        }
        *slot = row[*dq.front().unwrap()];
    }
}

/// Grey-scale erosion (`take_max = false`) or dilation with a disk of
/// `radius`; neighbors outside the raster are ignored.
fn morph(src: &[f64], width: usize, height: usize, radius: usize, take_max: bool) -> Vec<f64> {
    let runs = disk_runs(radius);
    let mut distinct: Vec<usize> = runs.clone();
    distinct.sort_unstable();
    distinct.dedup();
    // row extremes per distinct half-width
    let mut rowext: Vec<Vec<f64>> = Vec::with_capacity(distinct.len());
    for &half in &distinct {
        let mut buf = vec![0.0; width * height];
        for r in 0..height {
            sliding_extreme(&src[r * width..(r + 1) * width], half, take_max, &mut buf[r * width..(r + 1) * width]);
        }
        rowext.push(buf);
    }
    let init = if take_max { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut out = vec![init; width * height];
    for (k, &half) in runs.iter().enumerate() {
        let dy = k as isize - radius as isize;
        let buf = &rowext[distinct.binary_search(&half).unwrap()];
        for r in 0..height {
            let rr = r as isize + dy;
            if rr < 0 || rr >= height as isize {
                continue;
            }
            let (dst, srow) = (&mut out[r * width..(r + 1) * width], &buf[rr as usize * width..(rr as usize + 1) * width]);
            for (d, &s) in dst.iter_mut().zip(srow) {
                *d = if take_max { d.max(s) } else { d.min(s) };
            }
        }
    }
    out
}

pub fn erode(surface: &Raster, radius: usize) -> Raster {
    Raster {
        z: morph(&surface.z, surface.width, surface.height, radius, false),
        ..surface.clone()
    }
}

pub fn dilate(surface: &Raster, radius: usize) -> Raster {
    Raster {
        z: morph(&surface.z, surface.width, surface.height, radius, true),
        ..surface.clone()
    }
}

/// Erosion followed by dilation.
pub fn open(surface: &Raster, radius: usize) -> Raster {
    dilate(&erode(surface, radius), radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opening {
    pub non_ground: Vec<bool>,
    pub bare_earth: Raster,
}

pub fn progressive_open(grid: &SmrfGrid, max_window_radius: usize, slope: f64) -> Result<Opening> {
    if max_window_radius == 0 {
        return Err(Error::config("max window radius must be at least 1"));
    }
    if !(slope >= 0.0) {
        return Err(Error::config("slope must be non-negative"));
    }
    let mut surface = grid.surface.clone();
    let mut non_ground = vec![false; surface.z.len()];
    for radius in 1..=max_window_radius {
        let opened = open(&surface, radius);
        let threshold = slope * radius as f64 * surface.cell_size;
        for ((cur, &o), flag) in surface.z.iter_mut().zip(&opened.z).zip(non_ground.iter_mut()) {
            if *cur - o > threshold {
                *flag = true;
                *cur = o;
            }
        }
    }
    Ok(Opening {
        non_ground,
        bare_earth: surface,
    })
}

/// Classification outcome; `outside` counts points that fell off the raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub mask: GroundMask,
    pub outside: usize,
}

pub fn classify_points(cloud: &PointCloud, bare_earth: &Raster, elevation_threshold: f64, elevation_scale: f64) -> Result<Classified> {
    if !(elevation_threshold >= 0.0 && elevation_scale >= 0.0) {
        return Err(Error::config("elevation thresholds must be non-negative"));
    }
    let mut outside = 0;
    let flags = cloud
        .iter()
        .map(|p| match bare_earth.cell_of(p.x as f64, p.y as f64) {
            Some((r, c)) => {
                let tol = elevation_threshold + elevation_scale * bare_earth.slope_at(r, c) * bare_earth.cell_size;
                (p.z as f64 - bare_earth.at(r, c)).abs() <= tol
            }
            None => {
                outside += 1;
                false
            }
        })
        .collect();
    Ok(Classified {
        mask: GroundMask(flags),
        outside,
    })
}

pub fn smrf_ground(cloud: &PointCloud, params: &SmrfParams) -> Result<GroundMask> {
    params.validate()?;
    let grid = rasterize_min_surface(cloud, params.cell_size)?;
    let opening = progressive_open(&grid, params.max_window_radius, params.slope)?;
    Ok(classify_points(cloud, &opening.bare_earth, params.elevation_threshold, params.elevation_scale)?.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raster(width: usize, height: usize, z: Vec<f64>) -> Raster {
        Raster {
            cell_size: 1.0,
            origin: [0.0, 0.0],
            width,
            height,
            z,
        }
    }

    fn grid_of(surface: Raster) -> SmrfGrid {
        let n = surface.z.len();
        SmrfGrid {
            surface,
            occupied: vec![true; n],
            inpainted: vec![false; n],
        }
    }

    #[test]
    fn single_point_grid() {
        let g = rasterize_min_surface(&PointCloud::new(vec![Point::new(0.3, 0.4, 2.0, 0.0)]), 1.0).unwrap();
        assert_eq!((g.surface.width, g.surface.height), (1, 1));
        assert_eq!(g.surface.z, vec![2.0]);
    }

    #[test]
    fn cell_keeps_minimum() {
        let cloud = PointCloud::new(vec![Point::new(0.1, 0.1, 5.0, 0.0), Point::new(0.2, 0.3, 3.0, 0.0)]);
        assert_eq!(rasterize_min_surface(&cloud, 1.0).unwrap().surface.z, vec![3.0]);
        assert!(matches!(rasterize_min_surface(&PointCloud::default(), 1.0), Err(Error::EmptyCloud)));
    }

    #[test]
    fn inpainting_nearest_with_low_tie() {
        // occupied at (0,0) z=1 and (0,4) z=3; cell (0,2) is equidistant -> 1.0
        let cloud = PointCloud::new(vec![Point::new(0.5, 0.5, 1.0, 0.0), Point::new(4.5, 0.5, 3.0, 0.0)]);
        let g = rasterize_min_surface(&cloud, 1.0).unwrap();
        assert_eq!(g.surface.width, 5);
        assert_eq!(g.surface.z, vec![1.0, 1.0, 1.0, 3.0, 3.0]);
        assert_eq!(g.inpainted, vec![false, true, true, true, false]);
    }

    // Bucket every point by floor division and take minima; inpaint by brute force.
    #[test]
    fn raster_matches_bucket_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cloud: PointCloud = (0..200)
            .map(|_| Point::new(rng.random_range(-10.0..10.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..3.0), 0.0))
            .collect();
        let cs = 0.7;
        let g = rasterize_min_surface(&cloud, cs).unwrap();
        let minx = cloud.iter().map(|p| p.x as f64).fold(f64::INFINITY, f64::min);
        let miny = cloud.iter().map(|p| p.y as f64).fold(f64::INFINITY, f64::min);
        let mut cells: std::collections::HashMap<(i64, i64), f64> = Default::default();
        for p in cloud.iter() {
            let key = (((p.y as f64 - miny) / cs).floor() as i64, ((p.x as f64 - minx) / cs).floor() as i64);
            let e = cells.entry(key).or_insert(f64::INFINITY);
            *e = e.min(p.z as f64);
        }
        let (w, h) = (g.surface.width as i64, g.surface.height as i64);
        for r in 0..h {
            for c in 0..w {
                let got = g.surface.z[(r * w + c) as usize];
                let expect = match cells.get(&(r, c)) {
                    Some(&z) => z,
                    None => {
                        let mut best = (i64::MAX, f64::INFINITY);
                        for (&(rr, cc), &z) in &cells {
                            let d = (rr - r).pow(2) + (cc - c).pow(2);
                            if d < best.0 || (d == best.0 && z < best.1) {
                                best = (d, z);
                            }
                        }
                        best.1
                    }
                };
                assert_eq!(got, expect, "cell {r},{c}");
            }
        }
    }

    #[test]
    fn disk_shapes() {
        assert_eq!(disk_runs(1), vec![0, 1, 0]);
        assert_eq!(disk_runs(2), vec![0, 1, 2, 1, 0]);
        assert_eq!(disk_runs(3), vec![0, 2, 2, 3, 2, 2, 0]);
    }

    #[test]
    fn flat_surface_is_untouched() {
        let g = grid_of(raster(9, 7, vec![-1.7; 63]));
        let o = progressive_open(&g, 4, 0.15).unwrap();
        assert!(o.non_ground.iter().all(|&f| !f));
        assert_eq!(o.bare_earth.z, vec![-1.7; 63]);
    }

    #[test]
    fn spike_flagged_at_first_radius() {
        let mut z = vec![0.0; 49];
        z[3 * 7 + 3] = 2.0;
        let g = grid_of(raster(7, 7, z));
        let opened = open(&g.surface, 1);
        assert_eq!(opened.at(3, 3), 0.0);
        // 2.0 m drop against 0.15 * 1 * 1 m
        let o = progressive_open(&g, 3, 0.15).unwrap();
        assert_eq!(o.non_ground.iter().filter(|&&f| f).count(), 1);
        assert!(o.non_ground[24]);
        assert_eq!(o.bare_earth.at(3, 3), 0.0);
    }

    #[test]
    fn opening_is_anti_extensive_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for radius in 1..=4 {
            let s = raster(15, 11, (0..165).map(|_| rng.random_range(-1.0..1.0)).collect());
            let once = open(&s, radius);
            assert!(once.z.iter().zip(&s.z).all(|(o, z)| o <= z));
            assert_eq!(open(&once, radius), once);
        }
    }

    #[test]
    fn classification_rules() {
        let flat = raster(4, 4, vec![0.0; 16]);
        let cloud = PointCloud::new(vec![
            Point::new(1.5, 1.5, 0.0, 0.0),
            Point::new(2.5, 0.5, 10.0, 0.0),
            Point::new(-3.0, 0.5, 0.0, 0.0),
        ]);
        let out = classify_points(&cloud, &flat, 0.5, 1.25).unwrap();
        assert_eq!(out.mask.0, vec![true, false, false]);
        assert_eq!(out.outside, 1);
        let on = classify_points(&PointCloud::new(vec![Point::new(0.5, 0.5, 0.0, 0.0)]), &flat, 0.0, 0.0).unwrap();
        assert!(on.mask.0[0]);
    }

    #[test]
    fn bad_params() {
        assert!(SmrfParams { cell_size: 0.0, ..Default::default() }.validate().is_err());
        assert!(SmrfParams { max_window_radius: 0, ..Default::default() }.validate().is_err());
        assert!(SmrfParams { slope: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn ground_plane_with_box_object() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..4000 {
            let (x, y) = (rng.random_range(-20.0..20.0f32), rng.random_range(-20.0..20.0f32));
            pts.push(Point::new(x, y, -1.7 + 0.02 * rng.random::<f32>(), 0.0));
            truth.push(true);
        }
        for _ in 0..600 {
            let (x, y) = (rng.random_range(3.0..6.0f32), rng.random_range(3.0..5.0f32));
            pts.push(Point::new(x, y, rng.random_range(-0.5..0.5f32), 0.0));
            truth.push(false);
        }
        let mask = smrf_ground(&PointCloud::new(pts), &SmrfParams::default()).unwrap();
        let agree = mask.0.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / truth.len() as f64 > 0.97, "agreement {agree}");
    }
}
