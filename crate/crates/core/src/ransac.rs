// SPDX-License-Identifier: Apache-2.0

//! Ground plane by RANSAC with a tilt limit on the plane normal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, GroundMask, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    pub dist_threshold: f64,
    pub max_normal_tilt_deg: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            dist_threshold: 0.2,
            max_normal_tilt_deg: 15.0,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("RANSAC needs at least one iteration"));
        }
        if !(self.dist_threshold > 0.0) {
            return Err(Error::config("RANSAC distance threshold must be positive"));
        }
        if !(0.0..=90.0).contains(&self.max_normal_tilt_deg) {
            return Err(Error::config("RANSAC tilt limit must be within [0, 90] degrees"));
        }
        Ok(())
    }
}

/// Plane `normal . p + offset = 0` with a unit normal pointing up (`normal.z >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl PlaneModel {
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        dot(self.normal, p) + self.offset
    }

    /// Angle between the normal and +z, radians.
    pub fn tilt(&self) -> f64 {
        self.normal[2].clamp(-1.0, 1.0).acos()
    }
}

pub fn fit_plane_3pts(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3]) -> Result<PlaneModel> {
    let n = cross(sub(p2, p1), sub(p3, p1));
    let norm = dot(n, n).sqrt();
    if !(norm > 1e-12) {
        return Err(Error::DegenerateSample);
    }
    let mut normal = n.map(|v| v / norm);
    if normal[2] < 0.0 {
        normal = normal.map(|v| -v);
    }
    Ok(PlaneModel {
        normal,
        offset: -dot(normal, p1),
    })
}

/// Inliers satisfy `|distance| <= dist_threshold`.
pub fn count_inliers(cloud: &PointCloud, plane: &PlaneModel, dist_threshold: f64) -> (usize, GroundMask) {
    let flags: Vec<bool> = cloud
        .iter()
        .map(|p| plane.signed_distance(p.xyz_f64()).abs() <= dist_threshold)
        .collect();
    let count = flags.iter().filter(|&&f| f).count();
    (count, GroundMask(flags))
}

fn count_only(cloud: &PointCloud, plane: &PlaneModel, dist_threshold: f64) -> usize {
    cloud
        .iter()
        .filter(|p| plane.signed_distance(p.xyz_f64()).abs() <= dist_threshold)
        .count()
}

/// Three distinct indices below `n`.
fn sample_triple(rng: &mut ChaCha8Rng, n: usize) -> [usize; 3] {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let mut c = rng.random_range(0..n - 2);
    if c >= lo {
        c += 1;
    }
    if c >= hi {
        c += 1;
    }
    [a, b, c]
}

/// Best plane over `iterations` seeded samples, or `None` if no sample produced
/// a non-degenerate plane within the tilt limit. Ties keep the earliest model.
pub fn best_plane(cloud: &PointCloud, params: &RansacParams) -> Result<Option<(PlaneModel, usize)>> {
    params.validate()?;
    if cloud.len() < 3 {
        return Err(Error::TooFewPoints(cloud.len()));
    }
    let max_tilt = params.max_normal_tilt_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(PlaneModel, usize)> = None;
    for _ in 0..params.iterations {
        let [a, b, c] = sample_triple(&mut rng, cloud.len());
        let pts = [a, b, c].map(|i| cloud.points[i].xyz_f64());
        let Ok(plane) = fit_plane_3pts(pts[0], pts[1], pts[2]) else {
            continue;
        };
        if plane.tilt() > max_tilt {
            continue;
        }
        let count = count_only(cloud, &plane, params.dist_threshold);
        if best.is_none_or(|(_, n)| count > n) {
            best = Some((plane, count));
        }
    }
    Ok(best)
}

pub fn ransac_ground(cloud: &PointCloud, params: &RansacParams) -> Result<GroundMask> {
    Ok(match best_plane(cloud, params)? {
        Some((plane, _)) => count_inliers(cloud, &plane, params.dist_threshold).1,
        None => GroundMask::all(cloud.len(), false),
    })
}
