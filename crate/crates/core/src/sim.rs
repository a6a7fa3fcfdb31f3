// SPDX-License-Identifier: Apache-2.0

//! Ray-cast scene simulator for labeled test data.
//!
//! Produces HDL-64E-like scans with SemanticKITTI class labels and
//! solid-state captures in raw emission order. World frame: x along the road,
//! z up. Scans are expressed in the sensor frame.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kitti::{self, LANE_MARKING, PARKING, ROAD, SIDEWALK, TERRAIN};
use crate::ssl::{self, SslRawFrame, SslRecord, SUBFRAME_COLS, SUBFRAME_COUNT, SUBFRAME_ROWS};
use crate::{Error, Point, PointCloud, Result};

pub const CAR: u32 = 10;
pub const BUILDING: u32 = 50;
pub const VEGETATION: u32 = 70;
pub const TRUNK: u32 = 71;
pub const POLE: u32 = 80;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { min: [f64; 3], max: [f64; 3] },
    /// Vertical cylinder.
    Cylinder { center: [f64; 2], radius: f64, z: [f64; 2] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    /// Smallest positive ray parameter of an intersection.
    fn hit(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        match *self {
            Shape::Box { min, max } => {
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-12 {
                        if o[k] < min[k] || o[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((min[k] - o[k]) / d[k], (max[k] - o[k]) / d[k]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                    if t0 > t1 {
                        return None;
                    }
                }
                (t0 > 1e-6).then_some(t0)
            }
            Shape::Cylinder { center, radius, z } => {
                let (px, py) = (o[0] - center[0], o[1] - center[1]);
                let a = d[0] * d[0] + d[1] * d[1];
                if a < 1e-12 {
                    return None;
                }
                let b = 2.0 * (px * d[0] + py * d[1]);
                let c = px * px + py * py - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / (2.0 * a);
                let hz = o[2] + t * d[2];
                (t > 1e-6 && hz >= z[0] && hz <= z[1]).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let p = [o[0] - center[0], o[1] - center[1], o[2] - center[2]];
                let b = p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
                let c = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                (t > 1e-6).then_some(t)
            }
        }
    }

    fn planar_bounds(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Shape::Box { min, max } => ([min[0], min[1]], [max[0], max[1]]),
            Shape::Cylinder { center, radius, .. } => ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]),
            Shape::Sphere { center, radius } => ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Object {
    pub shape: Shape,
    pub label: u32,
}

/// Street cross-section along x: road (with parking lanes at its edges),
/// raised sidewalks, then terrain whose slope differs per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ground {
    pub road_half_width: f64,
    pub parking_width: f64,
    pub sidewalk_width: f64,
    pub curb_height: f64,
    /// Longitudinal grade (rise per meter along x).
    pub grade: f64,
    /// Lateral slope of the terrain beyond the left (+y) and right (-y) sidewalks.
    pub terrain_slope: [f64; 2],
    pub bump_amplitude: f64,
    pub bump_wavelength: f64,
    /// A single plane at z = 0 when set.
    pub flat: bool,
}

impl Ground {
    pub fn flat() -> Self {
        Ground {
            road_half_width: f64::INFINITY,
            parking_width: 0.0,
            sidewalk_width: 0.0,
            curb_height: 0.0,
            grade: 0.0,
            terrain_slope: [0.0; 2],
            bump_amplitude: 0.0,
            bump_wavelength: 1.0,
            flat: true,
        }
    }

    /// Height and SemanticKITTI class of the ground at `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> (f64, u32) {
        if self.flat {
            return (0.0, ROAD as u32);
        }
        let base = self.grade * x;
        let ay = y.abs();
        let edge = self.road_half_width + self.sidewalk_width;
        if ay <= self.road_half_width {
            // slight crown toward the centerline
            let z = base - 0.01 * ay;
            let label = if ay > self.road_half_width - self.parking_width {
                PARKING
            } else if (ay - 0.1).abs() < 0.1 && (x / 3.0).rem_euclid(2.0) < 1.0 {
                LANE_MARKING
            } else {
                ROAD
            };
            (z, label as u32)
        } else if ay <= edge {
            (base - 0.01 * self.road_half_width + self.curb_height, SIDEWALK as u32)
        } else {
            let side = usize::from(y < 0.0);
            let run = ay - edge;
            let bumps = self.bump_amplitude
                * (2.0 * PI * x / self.bump_wavelength).sin()
                * (2.0 * PI * run / (0.7 * self.bump_wavelength)).cos()
                * (run / 4.0).min(1.0);
            let z = base - 0.01 * self.road_half_width + self.curb_height + self.terrain_slope[side] * run + bumps;
            (z, TERRAIN as u32)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground: Ground,
    pub objects: Vec<Object>,
}

impl Scene {
    pub fn flat() -> Self {
        Scene {
            ground: Ground::flat(),
            objects: Vec::new(),
        }
    }

    /// Street scene spanning `x in [x0, x1]`: buildings behind terrain verges,
    /// parked and oncoming cars, poles, trees and bushes.
    pub fn urban(seed: u64, x0: f64, x1: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = Ground {
            road_half_width: rng.random_range(6.0..7.5),
            parking_width: 2.3,
            sidewalk_width: rng.random_range(2.0..3.5),
            curb_height: 0.15,
            grade: rng.random_range(-0.02..0.02),
            terrain_slope: [rng.random_range(0.05..0.15), rng.random_range(-0.12..-0.02)],
            bump_amplitude: rng.random_range(0.1..0.3),
            bump_wavelength: rng.random_range(12.0..25.0),
            flat: false,
        };
        let mut scene = Scene { ground, objects: Vec::new() };
        let g = |s: &Scene, x: f64, y: f64| s.ground.sample(x, y).0;
        let edge = ground.road_half_width + ground.sidewalk_width;

        for sign in [1.0f64, -1.0] {
            // buildings
            let mut x = x0 + rng.random_range(0.0..10.0);
            while x < x1 {
                let len = rng.random_range(8.0..25.0);
                let setback = edge + rng.random_range(3.0..10.0);
                let depth = rng.random_range(8.0..18.0);
                let height = rng.random_range(5.0..15.0);
                let (ya, yb) = (sign * setback, sign * (setback + depth));
                let zb = g(&scene, x + len / 2.0, ya) - 0.5;
                scene.objects.push(Object {
                    shape: Shape::Box {
                        min: [x, ya.min(yb), zb],
                        max: [x + len, ya.max(yb), zb + height],
                    },
                    label: BUILDING,
                });
                x += len + rng.random_range(2.0..15.0);
            }
            // parked cars
            let mut x = x0 + rng.random_range(0.0..6.0);
            while x < x1 {
                if rng.random_bool(0.6) {
                    let yc = sign * (ground.road_half_width - 1.2);
                    push_car(&mut scene, x, yc, &mut rng);
                }
                x += rng.random_range(5.5..9.0);
            }
            // poles on the sidewalk
            let mut x = x0 + rng.random_range(0.0..20.0);
            while x < x1 {
                let y = sign * (ground.road_half_width + 0.5);
                let zb = g(&scene, x, y);
                scene.objects.push(Object {
                    shape: Shape::Cylinder { center: [x, y], radius: 0.12, z: [zb, zb + rng.random_range(4.0..8.0)] },
                    label: POLE,
                });
                x += rng.random_range(15.0..30.0);
            }
            // trees and bushes on the verge
            let mut x = x0 + rng.random_range(0.0..8.0);
            while x < x1 {
                let y = sign * (edge + rng.random_range(0.8..2.8));
                let zb = g(&scene, x, y);
                if rng.random_bool(0.5) {
                    let crown_r = rng.random_range(1.2..2.5);
                    let trunk_h = rng.random_range(1.8..3.0);
                    scene.objects.push(Object {
                        shape: Shape::Cylinder { center: [x, y], radius: 0.2, z: [zb, zb + trunk_h + crown_r] },
                        label: TRUNK,
                    });
                    scene.objects.push(Object {
                        shape: Shape::Sphere { center: [x, y, zb + trunk_h + crown_r * 0.8], radius: crown_r },
                        label: VEGETATION,
                    });
                } else {
                    let r = rng.random_range(0.4..1.0);
                    scene.objects.push(Object {
                        shape: Shape::Sphere { center: [x, y, zb + 0.3 * r], radius: r },
                        label: VEGETATION,
                    });
                }
                x += rng.random_range(4.0..12.0);
            }
        }
        // oncoming traffic in the left lane
        let mut x = x0 + rng.random_range(0.0..20.0);
        while x < x1 {
            push_car(&mut scene, x, rng.random_range(1.5..2.5), &mut rng);
            x += rng.random_range(15.0..40.0);
        }
        scene
    }

    /// Nearest hit along a unit ray: `(distance, label)`.
    pub fn cast(&self, o: [f64; 3], d: [f64; 3], max_range: f64) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        for obj in &self.objects {
            if let Some(t) = obj.shape.hit(o, d) {
                if t <= max_range && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, obj.label));
                }
            }
        }
        let limit = best.map_or(max_range, |(t, _)| t);
        if let Some(t) = self.ground_hit(o, d, limit) {
            let (_, label) = self.ground.sample(o[0] + t * d[0], o[1] + t * d[1]);
            best = Some((t, label));
        }
        best
    }

    fn ground_hit(&self, o: [f64; 3], d: [f64; 3], limit: f64) -> Option<f64> {
        let f = |t: f64| o[2] + t * d[2] - self.ground.sample(o[0] + t * d[0], o[1] + t * d[1]).0;
        if self.ground.flat {
            let t = -o[2] / d[2];
            return (d[2] < 0.0 && t <= limit).then_some(t);
        }
        let mut t = 0.3;
        let mut prev = f(t);
        if prev <= 0.0 {
            return None;
        }
        while t < limit {
            let next_t = (t + 0.04 + 0.01 * t).min(limit);
            let cur = f(next_t);
            if cur <= 0.0 {
                let (mut lo, mut hi) = (t, next_t);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(hi);
            }
            prev = cur;
            t = next_t;
        }
        let _ = prev;
        None
    }

    /// Objects whose footprint overlaps the given planar box.
    pub fn clear_area(&mut self, min: [f64; 2], max: [f64; 2]) {
        self.objects.retain(|o| {
            let (lo, hi) = o.shape.planar_bounds();
            hi[0] < min[0] || lo[0] > max[0] || hi[1] < min[1] || lo[1] > max[1]
        });
    }
}

fn push_car(scene: &mut Scene, x: f64, y: f64, rng: &mut ChaCha8Rng) {
    let (len, wid, hgt) = (rng.random_range(3.8..4.8), rng.random_range(1.7..1.9), rng.random_range(1.4..1.7));
    let zb = scene.ground.sample(x, y).0 + 0.15;
    scene.objects.push(Object {
        shape: Shape::Box {
            min: [x - len / 2.0, y - wid / 2.0, zb],
            max: [x + len / 2.0, y + wid / 2.0, zb + hgt],
        },
        label: CAR,
    });
}

/// HDL-64E-like spinning sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hdl64 {
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub range_noise: f64,
    pub dropout: f64,
    pub sensor_height: f64,
}

impl Default for Hdl64 {
    fn default() -> Self {
        Hdl64 {
            azimuth_steps: 1800,
            max_range: 80.0,
            range_noise: 0.02,
            dropout: 0.03,
            sensor_height: 1.73,
        }
    }
}

impl Hdl64 {
    /// Beam elevations, degrees: a dense upper block and a sparser lower block.
    pub fn elevations_deg() -> Vec<f64> {
        let upper = (0..32).map(|i| 2.0 - i as f64 * (10.33 / 31.0));
        let lower = (0..32).map(|i| -8.83 - i as f64 * (15.97 / 31.0));
        upper.chain(lower).collect()
    }
}

/// Scans the scene from `(x, y)` with the sensor `sensor_height` above the
/// ground there. Returns sensor-frame points and their class labels.
pub fn scan(scene: &Scene, x: f64, y: f64, cfg: &Hdl64, seed: u64) -> (PointCloud, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.range_noise.max(1e-12)).expect("finite sigma");
    let origin = [x, y, scene.ground.sample(x, y).0 + cfg.sensor_height];
    let mut cloud = PointCloud::default();
    let mut labels = Vec::new();
    for el in Hdl64::elevations_deg() {
        let el = el.to_radians();
        for step in 0..cfg.azimuth_steps {
            let az = PI - 2.0 * PI * (step as f64 + 0.5) / cfg.azimuth_steps as f64;
            let d = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            let Some((t, label)) = scene.cast(origin, d, cfg.max_range) else {
                continue;
            };
            if rng.random_bool(cfg.dropout) {
                continue;
            }
            let r = t + noise.sample(&mut rng);
            cloud.points.push(Point::new(
                (r * d[0]) as f32,
                (r * d[1]) as f32,
                (r * d[2]) as f32,
                rng.random_range(0.0..1.0),
            ));
            labels.push(label);
        }
    }
    (cloud, labels)
}

/// Writes a drive of `frames` scans, `spacing` meters apart along the right
/// lane, in SemanticKITTI layout under `root/sequences/<sequence>`.
pub fn write_sequence(root: &Path, sequence: &str, scene: &Scene, frames: u32, spacing: f64, cfg: &Hdl64, seed: u64) -> Result<()> {
    let seq = kitti::sequence_dir(root, sequence);
    for sub in ["velodyne", "labels"] {
        let dir = seq.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for f in 0..frames {
        let (cloud, labels) = scan(scene, f as f64 * spacing, -2.0, cfg, seed.wrapping_add(f as u64));
        let stem = kitti::frame_file_stem(f);
        kitti::write_velodyne_bin(seq.join("velodyne").join(format!("{stem}.bin")), &cloud)?;
        kitti::write_labels(seq.join("labels").join(format!("{stem}.label")), &labels)?;
    }
    Ok(())
}

/// The standard drive scene for a sequence of `frames` frames.
pub fn drive_scene(seed: u64, frames: u32, spacing: f64) -> Scene {
    let mut scene = Scene::urban(seed, -90.0, frames as f64 * spacing + 90.0);
    // keep the ego lane free
    scene.clear_area([-100.0, -3.5], [frames as f64 * spacing + 100.0, -0.5]);
    scene
}

/// Solid-state rig: five subframes of 126x125 returns, each aimed at a
/// different yaw with overlapping edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslRig {
    pub mount_height: f64,
    /// Yaw step between subframe centers, degrees.
    pub subframe_yaw_step_deg: f64,
    pub subframe_hfov_deg: f64,
    pub vfov_deg: [f64; 2],
    pub max_range: f64,
    pub range_noise: f64,
    pub dropout: f64,
}

impl Default for SslRig {
    fn default() -> Self {
        SslRig {
            mount_height: 1.8,
            subframe_yaw_step_deg: 24.0,
            subframe_hfov_deg: 25.0,
            vfov_deg: [12.5, -12.5],
            max_range: 150.0,
            range_noise: 0.02,
            dropout: 0.02,
        }
    }
}

impl SslRig {
    /// Ray direction for subframe `sub`, row `row`, subframe column `col`.
    pub fn direction(&self, sub: usize, row: usize, col: usize) -> [f64; 3] {
        let center = (2.0 - sub as f64) * self.subframe_yaw_step_deg;
        let half = self.subframe_hfov_deg / 2.0;
        let az = (center + half - self.subframe_hfov_deg * (col as f64 + 0.5) / SUBFRAME_COLS as f64).to_radians();
        let [top, bottom] = self.vfov_deg;
        let el = (top - (top - bottom) * (row as f64 + 0.5) / SUBFRAME_ROWS as f64).to_radians();
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }
}

/// Captures one frame in raw emission order (serpentine rows per `parity`).
pub fn ssl_capture(scene: &Scene, x: f64, y: f64, rig: &SslRig, parity: ssl::Parity, seed: u64) -> SslRawFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, rig.range_noise.max(1e-12)).expect("finite sigma");
    let origin = [x, y, scene.ground.sample(x, y).0 + rig.mount_height];
    let mut records = vec![SslRecord::INVALID; ssl::FRAME_RECORDS];
    for sub in 0..SUBFRAME_COUNT {
        for row in 0..SUBFRAME_ROWS {
            for col in 0..SUBFRAME_COLS {
                let d = rig.direction(sub, row, col);
                let hit = scene.cast(origin, d, rig.max_range);
                let dropped = rng.random_bool(rig.dropout);
                let r = noise.sample(&mut rng);
                if let (Some((t, _)), false) = (hit, dropped) {
                    let t = t + r;
                    records[ssl::raw_index(sub, row, col, parity)] = SslRecord::new((t * d[0]) as f32, (t * d[1]) as f32, (t * d[2]) as f32);
                }
            }
        }
    }
    SslRawFrame::new(records).expect("fixed record count")
}
