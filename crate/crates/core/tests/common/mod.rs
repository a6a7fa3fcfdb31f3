// SPDX-License-Identifier: Apache-2.0

//! Independent reference implementations and the checks that compare the
//! library against them. Shared by the oracle tests and the acceptance run.

#![allow(dead_code)]

use groundseg::depth::{self, AngleImage};
use groundseg::eval::{self, EvalStats};
use groundseg::range_image::{self, ProjectionConfig, RangeImage};
use groundseg::ransac::{self, RansacParams};
use groundseg::smrf::{self, Raster};
use groundseg::{GroundMask, Point, PointCloud};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- Savitzky-Golay ----

/// Least-squares polynomial through `(t, v)` evaluated at 0, solved by SVD.
pub fn lsq_at_zero(t: &[f64], v: &[f64], degree: usize) -> f64 {
    let a = DMatrix::from_fn(t.len(), degree + 1, |i, j| t[i].powi(j as i32));
    let b = DVector::from_column_slice(v);
    let coef = a.svd(true, true).solve(&b, 1e-14).expect("svd solve");
    coef[0]
}

pub fn sg_oracle(angles: &AngleImage, window: usize, order: usize) -> AngleImage {
    let half = (window / 2) as isize;
    let mut out = angles.clone();
    for c in 0..angles.cols {
        for r in 0..angles.rows {
            if angles.get(r, c).is_none() {
                continue;
            }
            let mut t = Vec::new();
            let mut v = Vec::new();
            for dr in -half..=half {
                let rr = r as isize + dr;
                if rr < 0 || rr >= angles.rows as isize {
                    continue;
                }
                if let Some(a) = angles.get(rr as usize, c) {
                    t.push(dr as f64);
                    v.push(a);
                }
            }
            if v.len() >= 2 {
                out.set(r, c, lsq_at_zero(&t, &v, order.min(v.len() - 1)));
            }
        }
    }
    out
}

pub fn random_angles(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fill: f64) -> AngleImage {
    let mut a = AngleImage::new(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(fill) {
                a.set(r, c, rng.random_range(0.0..std::f64::consts::FRAC_PI_2));
            }
        }
    }
    a
}

pub fn check_savitzky_golay(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let window = [3, 5, 7, 9][rng.random_range(0..4)];
        let order = rng.random_range(1..window);
        let (rows, cols) = (rng.random_range(1..24), rng.random_range(1..4));
        let fill = rng.random_range(0.4..1.0);
        let a = random_angles(&mut rng, rows, cols, fill);
        let got = depth::savitzky_golay_smooth(&a, window, order).map_err(|e| e.to_string())?;
        let want = sg_oracle(&a, window, order);
        ensure(got.valid == want.valid, || "validity flags changed".into())?;
        for (p, ok) in got.valid.iter().enumerate() {
            if *ok {
                worst = worst.max((got.angle[p] - want.angle[p]).abs());
            }
        }
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e} rad"))?;
    Ok(format!("{cases} images, max deviation {worst:.1e} rad"))
}

// ---- RANSAC ----

/// 200 points on a gently tilted plane plus 50 points at least 1 m off it.
pub fn ransac_fixture(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = |x: f64, y: f64| 0.1 * x - 0.05 * y - 1.7;
    let mut points = Vec::new();
    for _ in 0..200 {
        let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        points.push(Point::new(x as f32, y as f32, plane(x, y) as f32, 0.0));
    }
    for _ in 0..50 {
        let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let lift = rng.random_range(1.0..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        points.push(Point::new(x as f32, y as f32, (plane(x, y) + lift) as f32, 0.0));
    }
    points.into_iter().collect()
}

/// Best plane over every triple under the same acceptance rule (distinct,
/// non-degenerate, tilt limit; more inliers wins).
pub fn ransac_exhaustive(cloud: &PointCloud, params: &RansacParams) -> GroundMask {
    let pts: Vec<[f64; 3]> = cloud.iter().map(|p| p.xyz_f64()).collect();
    let n = pts.len();
    let max_tilt = params.max_normal_tilt_deg.to_radians();
    let inliers = |nrm: [f64; 3], d: f64| {
        pts.iter()
            .map(|p| (nrm[0] * p[0] + nrm[1] * p[1] + nrm[2] * p[2] + d).abs() <= params.dist_threshold)
            .collect::<Vec<bool>>()
    };
    let mut best: Option<(usize, Vec<bool>)> = None;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let mut nrm = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
                if len <= 1e-12 {
                    continue;
                }
                nrm = nrm.map(|x| x / len);
                if nrm[2].abs().min(1.0).acos() > max_tilt {
                    continue;
                }
                let d = -(nrm[0] * a[0] + nrm[1] * a[1] + nrm[2] * a[2]);
                let count = pts
                    .iter()
                    .filter(|p| (nrm[0] * p[0] + nrm[1] * p[1] + nrm[2] * p[2] + d).abs() <= params.dist_threshold)
                    .count();
                if best.as_ref().is_none_or(|(m, _)| count > *m) {
                    best = Some((count, inliers(nrm, d)));
                }
            }
        }
    }
    GroundMask(best.map_or_else(|| vec![false; n], |(_, m)| m))
}

pub fn check_ransac_exhaustive() -> Check {
    let cloud = ransac_fixture(11);
    let oracle = ransac_exhaustive(&cloud, &RansacParams::default());
    for seed in [0, 1, 42] {
        let params = RansacParams { seed, ..RansacParams::default() };
        let got = ransac::ransac_ground(&cloud, &params).map_err(|e| e.to_string())?;
        ensure(got == oracle, || {
            format!("seed {seed}: {} inliers vs oracle {}", got.count_ground(), oracle.count_ground())
        })?;
    }
    Ok(format!("250-point fixture, C(250,3) triples, {} inliers", oracle.count_ground()))
}

// ---- morphology ----

pub fn morph_oracle(r: &Raster, radius: usize, take_max: bool) -> Vec<f64> {
    let rad = radius as isize;
    let mut out = vec![0.0; r.z.len()];
    for row in 0..r.height as isize {
        for col in 0..r.width as isize {
            let mut acc = if take_max { f64::NEG_INFINITY } else { f64::INFINITY };
            for dy in -rad..=rad {
                for dx in -rad..=rad {
                    if dx * dx + dy * dy > rad * rad {
                        continue;
                    }
                    let (y, x) = (row + dy, col + dx);
                    if y < 0 || x < 0 || y >= r.height as isize || x >= r.width as isize {
                        continue;
                    }
                    let v = r.z[y as usize * r.width + x as usize];
                    acc = if take_max { acc.max(v) } else { acc.min(v) };
                }
            }
            out[row as usize * r.width + col as usize] = acc;
        }
    }
    out
}

pub fn random_raster(rng: &mut ChaCha8Rng) -> Raster {
    let (width, height) = (rng.random_range(1..14), rng.random_range(1..14));
    Raster {
        cell_size: 0.5,
        origin: [0.0, 0.0],
        width,
        height,
        z: (0..width * height).map(|_| (rng.random_range(-20..20) as f64) * 0.25).collect(),
    }
}

pub fn check_morphology(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let r = random_raster(&mut rng);
        for radius in 0..=2 {
            let eroded = morph_oracle(&r, radius, false);
            ensure(smrf::erode(&r, radius).z == eroded, || format!("erosion differs (case {case}, radius {radius})"))?;
            ensure(smrf::dilate(&r, radius).z == morph_oracle(&r, radius, true), || {
                format!("dilation differs (case {case}, radius {radius})")
            })?;
            let opened = morph_oracle(&Raster { z: eroded, ..r.clone() }, radius, true);
            ensure(smrf::open(&r, radius).z == opened, || format!("opening differs (case {case}, radius {radius})"))?;
        }
    }
    Ok(format!("{cases} rasters, radius 0..=2"))
}

// ---- projection ----

/// Winner per pixel by direct binning in degrees; nearest wins, ties keep the
/// earlier point.
pub fn projection_oracle(cloud: &PointCloud, cfg: &ProjectionConfig) -> Vec<Option<usize>> {
    let mut best: Vec<Option<(f64, usize)>> = vec![None; cfg.rows * cfg.cols];
    for (i, p) in cloud.iter().enumerate() {
        let [x, y, z] = p.xyz_f64();
        let range = (x * x + y * y + z * z).sqrt();
        if range == 0.0 {
            continue;
        }
        let el = z.atan2(x.hypot(y)).to_degrees();
        if el > cfg.fov_up_deg || el < cfg.fov_down_deg {
            continue;
        }
        let row = (((cfg.fov_up_deg - el) / (cfg.fov_up_deg - cfg.fov_down_deg) * cfg.rows as f64) as usize).min(cfg.rows - 1);
        let az = y.atan2(x).to_degrees();
        let az = if az <= -180.0 { 180.0 } else { az };
        let col = (((180.0 - az) / 360.0 * cfg.cols as f64) as usize).min(cfg.cols - 1);
        let slot = &mut best[row * cfg.cols + col];
        if slot.is_none_or(|(r, _)| range < r) {
            *slot = Some((range, i));
        }
    }
    best.into_iter().map(|b| b.map(|(_, i)| i)).collect()
}

pub fn random_scan(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    (0..n)
        .map(|_| {
            let az = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let el = rng.random_range(-30f64..5.0).to_radians();
            let r = rng.random_range(1.0..60.0);
            Point::new((r * el.cos() * az.cos()) as f32, (r * el.cos() * az.sin()) as f32, (r * el.sin()) as f32, 0.5)
        })
        .collect()
}

pub fn check_projection(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = 0;
    for case in 0..cases {
        let cfg = ProjectionConfig {
            rows: rng.random_range(4..=64),
            cols: rng.random_range(8..=1024),
            ..ProjectionConfig::default()
        };
        let n = rng.random_range(100..3000);
        points += n;
        let cloud = random_scan(&mut rng, n);
        let image = range_image::project_spherical(&cloud, &cfg).map_err(|e| e.to_string())?;
        let oracle = projection_oracle(&cloud, &cfg);
        for row in 0..cfg.rows {
            for col in 0..cfg.cols {
                let want = oracle[row * cfg.cols + col];
                ensure(image.point_index(row, col) == want, || format!("case {case}: pixel ({row},{col}) differs"))?;
                if let Some(i) = want {
                    ensure(image.xyz(row, col) == [cloud.points[i].x, cloud.points[i].y, cloud.points[i].z], || {
                        format!("case {case}: xyz at ({row},{col})")
                    })?;
                }
            }
        }
    }
    Ok(format!("{cases} clouds, {points} points"))
}

// ---- confusion / metrics ----

pub fn tally(pred: &[bool], truth: &[bool]) -> EvalStats {
    let mut s = EvalStats::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => s.tn += 1,
        }
    }
    s
}

pub fn check_tally(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(0..5000);
        let (pg, tg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(pg)).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(tg)).collect();
        let got = eval::confusion(&GroundMask(pred.clone()), &GroundMask(truth.clone())).map_err(|e| e.to_string())?;
        ensure(got == tally(&pred, &truth), || format!("case {case}: counts differ"))?;
    }
    Ok(format!("{cases} random mask pairs"))
}

pub fn check_metric_identities(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let s = EvalStats {
            tp: rng.random_range(0..1_000_000),
            fp: rng.random_range(0..1_000_000),
            fn_: rng.random_range(0..1_000_000),
            tn: rng.random_range(0..1_000_000),
        };
        if s.tp + s.fp + s.fn_ == 0 {
            continue;
        }
        let (tp, fp, fn_) = (s.tp as u128, s.fp as u128, s.fn_ as u128);
        // rational check: f1 = 2 tp / (2 tp + fp + fn) equals 2 iou / (1 + iou) with iou = tp / (tp + fp + fn)
        let (f1_num, f1_den) = (2 * tp, 2 * tp + fp + fn_);
        let (id_num, id_den) = (2 * tp, (tp + fp + fn_) + tp);
        ensure(f1_num * id_den == id_num * f1_den, || "rational identity fails".into())?;
        ensure(s.iou() == tp as f64 / (tp + fp + fn_) as f64, || "iou formula".into())?;
        ensure(s.f1() == f1_num as f64 / f1_den as f64, || "f1 formula".into())?;
        worst = worst.max((s.f1() - 2.0 * s.iou() / (1.0 + s.iou())).abs());
    }
    ensure(worst <= 4.0 * f64::EPSILON, || format!("floating identity off by {worst:e}"))?;
    let perfect = tally(&[true, false, true], &[true, false, true]);
    ensure(perfect.iou() == 1.0 && perfect.f1() == 1.0, || "perfect prediction is not 1.0".into())?;
    Ok(format!("{cases} confusion matrices, max float residual {worst:.1e}"))
}

// ---- slicing ----

pub fn random_image(rng: &mut ChaCha8Rng) -> RangeImage {
    let (rows, cols) = (rng.random_range(1..=64), rng.random_range(5..=700));
    let fill = rng.random_range(0.0..1.0);
    let mut next = 0u32;
    let cells: Vec<Option<([f32; 3], u32)>> = (0..rows * cols)
        .map(|_| {
            rng.random_bool(fill).then(|| {
                next += 1;
                ([rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-3.0..3.0)], next - 1)
            })
        })
        .collect();
    RangeImage::from_cells(rows, cols, cells, next as usize).expect("consistent cells")
}

type PixelKey = (u32, u32, [u32; 3]);

fn pixels_of(view: &range_image::ImageView<'_>) -> Vec<PixelKey> {
    let mut out = Vec::new();
    for r in 0..view.rows() {
        for c in 0..view.cols() {
            if let Some(i) = view.point_index(r, c) {
                out.push((i as u32, view.range(r, c).to_bits(), view.xyz(r, c).map(f32::to_bits)));
            }
        }
    }
    out
}

pub fn check_slicing_lossless(seed: u64, cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = 0;
    for case in 0..cases {
        let image = random_image(&mut rng);
        let mut parent = pixels_of(&image.full_view());
        parent.sort_unstable();
        pixels += parent.len();
        for k in 1..=5 {
            let (_, views) = range_image::slice_columns(&image, k).map_err(|e| e.to_string())?;
            let mut union: Vec<PixelKey> = views.iter().flat_map(pixels_of).collect();
            union.sort_unstable();
            ensure(union == parent, || format!("case {case}, K={k}: slices lose or duplicate pixels"))?;
        }
    }
    Ok(format!("{cases} images, {pixels} occupied pixels, K=1..5"))
}
