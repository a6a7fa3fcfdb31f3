// SPDX-License-Identifier: Apache-2.0

//! Sliced execution over processing units (PUs).
//!
//! A frame is cut into `K` slices, slices are assigned to `P` units in
//! contiguous balanced blocks, each unit runs its slices in order, and the
//! per-slice results are merged by ascending slice index once every unit has
//! finished. Slices share no mutable state and RANSAC seeds are derived per
//! slice (`seed ^ slice`), so the merged mask is the same for every `P`.

use std::borrow::Cow;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::depth::{self, DepthParams};
use crate::range_image::{self, azimuth_partition, balanced_blocks, PixelMask, ProjectionConfig, RangeImage};
use crate::ransac::{self, RansacParams};
use crate::smrf::{self, SmrfParams};
use crate::{Error, GroundMask, Point, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Depth,
    Ransac,
    Smrf,
}

impl MethodId {
    pub const ALL: [MethodId; 3] = [MethodId::Smrf, MethodId::Ransac, MethodId::Depth];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Depth => "depth",
            MethodId::Ransac => "ransac",
            MethodId::Smrf => "smrf",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(MethodId::Depth),
            "ransac" => Ok(MethodId::Ransac),
            "smrf" => Ok(MethodId::Smrf),
            other => Err(Error::config(format!("unknown method {other:?} (expected depth|ransac|smrf)"))),
        }
    }
}

/// A method plus every parameter any method might need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pipeline {
    pub method: MethodId,
    pub projection: ProjectionConfig,
    pub depth: DepthParams,
    pub ransac: RansacParams,
    pub smrf: SmrfParams,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            method: MethodId::Depth,
            projection: ProjectionConfig::default(),
            depth: DepthParams::default(),
            ransac: RansacParams::default(),
            smrf: SmrfParams::default(),
        }
    }
}

impl Pipeline {
    pub fn with_method(mut self, method: MethodId) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        match self.method {
            MethodId::Depth => self.depth.validate(),
            MethodId::Ransac => self.ransac.validate(),
            MethodId::Smrf => self.smrf.validate(),
        }
    }
}

/// Input frame. Scans are projected (depth) or split by azimuth (point
/// methods); organized frames are split by column bands for every method.
#[derive(Debug, Clone)]
pub enum Frame {
    Scan(PointCloud),
    Organized(RangeImage),
}

impl Frame {
    /// Length of the mask produced for this frame.
    pub fn mask_len(&self) -> usize {
        match self {
            Frame::Scan(c) => c.len(),
            Frame::Organized(img) => img.source_len(),
        }
    }
}

/// Contiguous balanced assignment of slices to units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuAllocation {
    pub slice_count: usize,
    pub unit_count: usize,
    /// Unit owning each slice.
    pub assignment: Vec<usize>,
}

pub fn allocate(slices: usize, units: usize) -> Result<PuAllocation> {
    if slices == 0 {
        return Err(Error::config("slice count must be at least 1"));
    }
    if units == 0 || units > slices {
        return Err(Error::config(format!("unit count {units} must be in 1..={slices}")));
    }
    let mut assignment = vec![0; slices];
    for (u, block) in balanced_blocks(slices, units).into_iter().enumerate() {
        for s in block {
            assignment[s] = u;
        }
    }
    Ok(PuAllocation {
        slice_count: slices,
        unit_count: units,
        assignment,
    })
}

impl PuAllocation {
    /// Slice range of each unit.
    pub fn unit_slices(&self) -> Vec<Range<usize>> {
        balanced_blocks(self.slice_count, self.unit_count)
    }

    pub fn loads(&self) -> Vec<usize> {
        self.unit_slices().iter().map(|r| r.len()).collect()
    }
}

/// How units are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    /// Units run one after another on the calling thread.
    Sequential,
    /// Each unit is a worker of a dedicated `P`-thread rayon pool.
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for Executor {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Executor::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
mod pools {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    use rayon::{ThreadPool, ThreadPoolBuilder};

    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();

    pub fn with_units(units: usize) -> Arc<ThreadPool> {
        let mut map = POOLS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        map.entry(units)
            .or_insert_with(|| {
                Arc::new(
                    ThreadPoolBuilder::new()
                        .num_threads(units)
                        .thread_name(|i| format!("pu-{i}"))
                        .build()
                        .expect("build processing-unit pool"),
                )
            })
            .clone()
    }
}

/// Runs `job` for every slice, unit by unit, and returns results in slice order.
fn execute<T, F>(alloc: &PuAllocation, executor: Executor, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let run_unit = |slices: Range<usize>| -> Result<Vec<T>> {
        slices
            .map(|s| job(s).map_err(|e| Error::Slice { slice: s, source: Box::new(e) }))
            .collect()
    };
    let per_unit: Vec<Result<Vec<T>>> = match executor {
        Executor::Sequential => alloc.unit_slices().into_iter().map(run_unit).collect(),
        #[cfg(feature = "parallel")]
        Executor::Rayon => {
            use rayon::prelude::*;
            pools::with_units(alloc.unit_count).install(|| alloc.unit_slices().into_par_iter().map(run_unit).collect())
        }
    };
    let mut out = Vec::with_capacity(alloc.slice_count);
    for unit in per_unit {
        out.extend(unit?);
    }
    Ok(out)
}

/// Points of a frame prepared for a point-domain method: `targets[i]` is the
/// mask entry written for `points[i]`.
struct PointSlices<'a> {
    points: Cow<'a, PointCloud>,
    targets: Option<Vec<usize>>,
    parts: Vec<Vec<usize>>,
}

fn point_slices<'a>(frame: &'a Frame, k: usize) -> Result<PointSlices<'a>> {
    match frame {
        Frame::Scan(cloud) => Ok(PointSlices {
            points: Cow::Borrowed(cloud),
            targets: None,
            parts: azimuth_partition(cloud, k)?,
        }),
        Frame::Organized(img) => {
            let spec = range_image::SliceSpec::new(img.cols(), k)?;
            let mut points = PointCloud::default();
            let mut targets = Vec::new();
            let mut parts = Vec::with_capacity(k);
            for band in &spec.intervals {
                let mut part = Vec::new();
                for row in 0..img.rows() {
                    for col in band.clone() {
                        if let Some(i) = img.point_index(row, col) {
                            let [x, y, z] = img.xyz(row, col);
                            part.push(points.len());
                            points.points.push(Point::new(x, y, z, 0.0));
                            targets.push(i);
                        }
                    }
                }
                parts.push(part);
            }
            Ok(PointSlices {
                points: Cow::Owned(points),
                targets: Some(targets),
                parts,
            })
        }
    }
}

fn segment_points(cloud: &PointCloud, pipeline: &Pipeline, slice: usize) -> Result<GroundMask> {
    if cloud.is_empty() {
        return Ok(GroundMask::default());
    }
    match pipeline.method {
        // too few points to fit a plane: nothing in this slice is ground
        MethodId::Ransac if cloud.len() < 3 => Ok(GroundMask::all(cloud.len(), false)),
        MethodId::Ransac => {
            let params = RansacParams {
                seed: pipeline.ransac.seed ^ slice as u64,
                ..pipeline.ransac
            };
            ransac::ransac_ground(cloud, &params)
        }
        MethodId::Smrf => smrf::smrf_ground(cloud, &pipeline.smrf),
        MethodId::Depth => unreachable!("depth runs on image slices"),
    }
}

fn run_image(image: &RangeImage, pipeline: &Pipeline, alloc: &PuAllocation, executor: Executor) -> Result<GroundMask> {
    let (spec, views) = range_image::slice_columns(image, alloc.slice_count)?;
    let masks: Vec<PixelMask> = execute(alloc, executor, |s| depth::segment_view(&views[s], &pipeline.depth))?;
    range_image::merge_masks(&masks, image, &spec)
}

/// Segments `frame` in `slices` slices on `units` units with the default executor.
pub fn run_sliced(frame: &Frame, pipeline: &Pipeline, slices: usize, units: usize) -> Result<(GroundMask, BenchmarkRecord)> {
    run_sliced_with(Executor::default(), frame, pipeline, slices, units)
}

pub fn run_sliced_with(
    executor: Executor,
    frame: &Frame,
    pipeline: &Pipeline,
    slices: usize,
    units: usize,
) -> Result<(GroundMask, BenchmarkRecord)> {
    pipeline.validate()?;
    let alloc = allocate(slices, units)?;
    let start = Instant::now();
    let mask = match (pipeline.method, frame) {
        (MethodId::Depth, Frame::Scan(cloud)) => {
            let image = range_image::project_spherical(cloud, &pipeline.projection)?;
            run_image(&image, pipeline, &alloc, executor)?
        }
        (MethodId::Depth, Frame::Organized(image)) => run_image(image, pipeline, &alloc, executor)?,
        (_, frame) => {
            let prepared = point_slices(frame, slices)?;
            let results = execute(&alloc, executor, |s| {
                segment_points(&prepared.points.select(&prepared.parts[s]), pipeline, s)
            })?;
            let mut out = vec![false; frame.mask_len()];
            for (part, mask) in prepared.parts.iter().zip(&results) {
                for (&i, &g) in part.iter().zip(&mask.0) {
                    let target = prepared.targets.as_ref().map_or(i, |t| t[i]);
                    out[target] = g;
                }
            }
            GroundMask(out)
        }
    };
    let wall_ms = (start.elapsed().as_secs_f64() * 1e3).max(f64::MIN_POSITIVE);
    Ok((
        mask,
        BenchmarkRecord {
            method: pipeline.method,
            slices,
            units,
            frame: String::new(),
            wall_ms,
            speedup: None,
        },
    ))
}

/// Median of `reps` timed runs after `warmup` untimed ones, milliseconds.
pub fn median_time(frame: &Frame, pipeline: &Pipeline, slices: usize, units: usize, warmup: usize, reps: usize) -> Result<f64> {
    run_timed(Executor::default(), frame, pipeline, slices, units, warmup, reps)
}

pub fn run_timed(
    executor: Executor,
    frame: &Frame,
    pipeline: &Pipeline,
    slices: usize,
    units: usize,
    warmup: usize,
    reps: usize,
) -> Result<f64> {
    for _ in 0..warmup {
        run_sliced_with(executor, frame, pipeline, slices, units)?;
    }
    let mut times = (0..reps.max(1))
        .map(|_| run_sliced_with(executor, frame, pipeline, slices, units).map(|(_, r)| r.wall_ms))
        .collect::<Result<Vec<f64>>>()?;
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

pub const BASELINE_REPS: usize = 11;
pub const BASELINE_WARMUP: usize = 2;

/// Steady-state single-slice, single-unit time: median of 11 runs after warmup.
pub fn time_baseline(frame: &Frame, pipeline: &Pipeline) -> Result<f64> {
    median_time(frame, pipeline, 1, 1, BASELINE_WARMUP, BASELINE_REPS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub method: MethodId,
    pub slices: usize,
    pub units: usize,
    pub frame: String,
    pub wall_ms: f64,
    /// `baseline / wall_ms` against the K=1, P=1 baseline of the same method and frame.
    pub speedup: Option<f64>,
}

impl BenchmarkRecord {
    pub fn with_baseline(mut self, baseline_ms: f64) -> Self {
        self.speedup = Some(baseline_ms / self.wall_ms);
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4}",
            self.method,
            self.slices,
            self.units,
            self.frame,
            self.wall_ms,
            self.speedup.unwrap_or(f64::NAN)
        )
    }
}

pub const BENCH_CSV_HEADER: &str = "method,slices,units,frame,wall_ms,speedup";

pub fn bench_csv(records: &[BenchmarkRecord]) -> String {
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
