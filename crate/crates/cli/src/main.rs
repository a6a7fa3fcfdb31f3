// SPDX-License-Identifier: Apache-2.0

//! `groundseg`: ground segmentation of LiDAR frames with optional slicing.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

mod config;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use groundseg::eval::{self, FrameScore};
use groundseg::kitti::{self, FrameEntry, GroundClasses};
use groundseg::parallel::{self, BenchmarkRecord, Executor, Frame, MethodId};
use groundseg::range_image::{self, RangeImage};
use groundseg::ssl::{self, Parity};
use groundseg::{render, sim, GroundMask};
use serde::Serialize;

use config::RunConfig;

/// Bad arguments or configuration; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "groundseg", version, about = "LiDAR ground segmentation with column slicing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment frames and write one mask per frame plus a manifest.
    Segment(Common),
    /// Score methods against ground-truth labels.
    Eval(Common),
    /// Time sliced runs against the single-slice baseline.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Run units one after another on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Write range images as PPM with a ground overlay.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Overlay::Predicted)]
        overlay: Overlay,
        /// Overlay a mask file written by `segment` (one frame only).
        #[arg(long, conflicts_with = "overlay")]
        mask: Option<PathBuf>,
    },
    /// Decode solid-state captures into grid dumps and print subframe stats.
    DecodeSsl {
        #[command(flatten)]
        common: Common,
        /// Capture files (`.sslraw` or `.csv`); added to any in the config.
        files: Vec<PathBuf>,
    },
    /// Write a simulated sequence in SemanticKITTI layout.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Also write one solid-state capture per frame under `<out>/ssl`.
        #[arg(long)]
        with_ssl: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Overlay {
    None,
    Predicted,
    Truth,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    method: Option<MethodId>,
    /// Number of slices K.
    #[arg(long, short = 'k')]
    slices: Option<usize>,
    /// Number of processing units P.
    #[arg(long, short = 'p')]
    units: Option<usize>,
    /// Inclusive frame range `a..b`.
    #[arg(long)]
    frames: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// SemanticKITTI root.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    sequence: Option<String>,
    /// Solid-state capture to process instead of a dataset sequence (repeatable).
    #[arg(long = "ssl-input")]
    ssl: Vec<PathBuf>,
    #[arg(long)]
    parity: Option<Parity>,
}

impl Common {
    /// Loads the configuration and applies flag overrides.
    fn resolve(&self) -> anyhow::Result<Resolved> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.run.method = m;
        }
        if let Some(k) = self.slices {
            cfg.run.slices = k;
        }
        if let Some(p) = self.units {
            cfg.run.units = p;
        }
        if let Some(f) = &self.frames {
            cfg.run.frames = f.clone();
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.ransac.seed = s;
        }
        if let Some(d) = &self.dataset {
            cfg.input.dataset = Some(d.clone());
        }
        if let Some(s) = &self.sequence {
            cfg.input.sequence = s.clone();
        }
        cfg.input.ssl.extend(self.ssl.iter().cloned());
        if let Some(p) = self.parity {
            cfg.input.parity = p;
        }
        cfg.validate()?;
        Ok(Resolved {
            cfg,
            method_set: self.method.is_some(),
            slices_set: self.slices.is_some(),
            units_set: self.units.is_some(),
        })
    }
}

struct Resolved {
    cfg: RunConfig,
    method_set: bool,
    slices_set: bool,
    units_set: bool,
}

impl Resolved {
    fn methods(&self) -> Vec<MethodId> {
        if self.method_set {
            vec![self.cfg.run.method]
        } else {
            self.cfg.eval.methods.clone()
        }
    }

    fn slice_counts(&self) -> anyhow::Result<Vec<usize>> {
        let ks = if self.slices_set { vec![self.cfg.run.slices] } else { self.cfg.eval.slices.clone() };
        if ks.is_empty() || ks.contains(&0) {
            return Err(usage("slice counts must be positive"));
        }
        Ok(ks)
    }
}

/// Where frames come from: a labelled sequence or a list of captures.
enum Source {
    Kitti { entries: Vec<FrameEntry>, classes: GroundClasses },
    Ssl { files: Vec<PathBuf>, parity: Parity },
}

struct Loaded {
    name: String,
    frame: Frame,
    truth: Option<GroundMask>,
    /// Indices of records dropped on load (non-finite), in file order.
    dropped: Vec<usize>,
}

impl Source {
    fn open(cfg: &RunConfig) -> anyhow::Result<Self> {
        let range = cfg.frame_range()?;
        if !cfg.input.ssl.is_empty() {
            let files = cfg
                .input
                .ssl
                .iter()
                .enumerate()
                .filter(|(i, _)| range.as_ref().is_none_or(|r| r.contains(&(*i as u32))))
                .map(|(_, p)| p.clone())
                .collect::<Vec<_>>();
            for f in &files {
                if !f.is_file() {
                    return Err(usage(format!("{}: no such capture", f.display())));
                }
            }
            return Ok(Source::Ssl { files, parity: cfg.input.parity });
        }
        let Some(root) = &cfg.input.dataset else {
            return Err(usage("no input: set input.dataset (or --dataset) or give --ssl-input"));
        };
        if !root.is_dir() {
            return Err(usage(format!("{}: dataset root does not exist", root.display())));
        }
        let classes = GroundClasses::from_preset(&cfg.input.ground_classes).map_err(|e| usage(e.to_string()))?;
        let entries = kitti::list_sequence(root, &cfg.input.sequence, range)?;
        if entries.is_empty() {
            bail!("no frames selected in {}", kitti::sequence_dir(root, &cfg.input.sequence).display());
        }
        Ok(Source::Kitti { entries, classes })
    }

    fn len(&self) -> usize {
        match self {
            Source::Kitti { entries, .. } => entries.len(),
            Source::Ssl { files, .. } => files.len(),
        }
    }

    fn load(&self, i: usize) -> anyhow::Result<Loaded> {
        match self {
            Source::Kitti { entries, classes } => {
                let pair = kitti::load_pair(&entries[i], classes)?;
                Ok(Loaded {
                    name: kitti::frame_file_stem(entries[i].frame),
                    frame: Frame::Scan(pair.scan.cloud),
                    truth: Some(pair.truth),
                    dropped: pair.scan.dropped,
                })
            }
            Source::Ssl { files, parity } => {
                let raw = ssl::load_raw(&files[i])?;
                let decoded = ssl::decode_ssl_frame(&raw, *parity);
                Ok(Loaded {
                    name: stem(&files[i]),
                    frame: Frame::Organized(RangeImage::from_ssl(&decoded)),
                    truth: None,
                    dropped: Vec::new(),
                })
            }
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frame".into())
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    frames: Vec<ManifestFrame>,
}

#[derive(Serialize)]
struct ManifestFrame {
    name: String,
    mask: String,
    points: usize,
    ground: usize,
    wall_ms: f64,
}

fn segment(common: &Common) -> anyhow::Result<()> {
    let r = common.resolve()?;
    let cfg = &r.cfg;
    let source = Source::open(cfg)?;
    let pipeline = cfg.pipeline();
    create_dir(&cfg.run.out)?;
    let mut frames = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let loaded = source.load(i)?;
        let (mask, record) = parallel::run_sliced(&loaded.frame, &pipeline, cfg.run.slices, cfg.run.units)
            .with_context(|| format!("frame {}", loaded.name))?;
        let mask = mask.with_dropped(&loaded.dropped);
        let file = format!("{}.mask", loaded.name);
        write_file(&cfg.run.out.join(&file), mask.to_bytes())?;
        println!("{} points {} ground {} {:.2} ms", loaded.name, mask.len(), mask.count_ground(), record.wall_ms);
        frames.push(ManifestFrame {
            name: loaded.name,
            mask: file,
            points: mask.len(),
            ground: mask.count_ground(),
            wall_ms: record.wall_ms,
        });
    }
    let manifest = toml::to_string(&Manifest { config: cfg, frames }).context("serializing manifest")?;
    write_file(&cfg.run.out.join("manifest.toml"), manifest)
}

fn evaluate(common: &Common) -> anyhow::Result<()> {
    let r = common.resolve()?;
    let cfg = &r.cfg;
    let methods = r.methods();
    let ks = r.slice_counts()?;
    let source = Source::open(cfg)?;
    if matches!(source, Source::Ssl { .. }) {
        return Err(usage("eval needs labelled frames (a dataset sequence)"));
    }
    create_dir(&cfg.run.out)?;
    let mut rows = Vec::new();
    for i in 0..source.len() {
        let loaded = source.load(i)?;
        let truth = loaded.truth.as_ref().expect("dataset frames carry labels");
        for &method in &methods {
            let pipeline = cfg.pipeline().with_method(method);
            for &k in &ks {
                let units = cfg.run.units.min(k);
                let (mask, _) = parallel::run_sliced(&loaded.frame, &pipeline, k, units)
                    .with_context(|| format!("frame {} {method} K={k}", loaded.name))?;
                rows.push(FrameScore {
                    method: method.to_string(),
                    slices: k,
                    frame: loaded.name.clone(),
                    stats: eval::confusion(&mask, truth)?,
                });
            }
        }
    }
    write_file(&cfg.run.out.join("frames.csv"), eval::frame_csv(&rows))?;
    let summary = eval::summary_csv(&rows)?;
    write_file(&cfg.run.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn bench(common: &Common, sequential: bool) -> anyhow::Result<()> {
    let r = common.resolve()?;
    let cfg = &r.cfg;
    let methods = r.methods();
    let ks = r.slice_counts()?;
    let units = if r.units_set { vec![cfg.run.units] } else { cfg.bench.units.clone() };
    if units.is_empty() || units.contains(&0) {
        return Err(usage("unit counts must be positive"));
    }
    let executor = if sequential { Executor::Sequential } else { Executor::default() };
    let source = Source::open(cfg)?;
    create_dir(&cfg.run.out)?;
    let (warmup, reps) = (cfg.bench.warmup, cfg.bench.reps);
    let mut records = Vec::new();
    for i in 0..source.len() {
        let loaded = source.load(i)?;
        for &method in &methods {
            let pipeline = cfg.pipeline().with_method(method);
            let baseline = parallel::run_timed(executor, &loaded.frame, &pipeline, 1, 1, warmup, reps)?;
            for &k in &ks {
                for &p in units.iter().filter(|&&p| p <= k) {
                    let wall_ms = parallel::run_timed(executor, &loaded.frame, &pipeline, k, p, warmup, reps)?;
                    let record = BenchmarkRecord {
                        method,
                        slices: k,
                        units: p,
                        frame: loaded.name.clone(),
                        wall_ms,
                        speedup: None,
                    }
                    .with_baseline(baseline);
                    println!("{}", record.csv_row());
                    records.push(record);
                }
            }
        }
    }
    write_file(&cfg.run.out.join("bench.csv"), parallel::bench_csv(&records))
}

fn render_frames(common: &Common, overlay: Overlay, mask_file: Option<&Path>) -> anyhow::Result<()> {
    let r = common.resolve()?;
    let cfg = &r.cfg;
    let source = Source::open(cfg)?;
    if overlay == Overlay::Truth && matches!(source, Source::Ssl { .. }) {
        return Err(usage("truth overlay needs labelled frames"));
    }
    if mask_file.is_some() && source.len() != 1 {
        return Err(usage("--mask needs exactly one selected frame"));
    }
    let pipeline = cfg.pipeline();
    let mut images = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let loaded = source.load(i)?;
        let image = match &loaded.frame {
            Frame::Scan(cloud) => range_image::project_spherical(cloud, &cfg.projection)?,
            Frame::Organized(image) => image.clone(),
        };
        let mask = match (mask_file, overlay) {
            (Some(path), _) => {
                let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let full = GroundMask::from_bytes(&bytes)?;
                let expected = loaded.frame.mask_len() + loaded.dropped.len();
                if full.len() != expected {
                    bail!("{}: mask has {} entries, frame {} has {expected} points", path.display(), full.len(), loaded.name);
                }
                Some(full.without_indices(&loaded.dropped))
            }
            (None, Overlay::None) => None,
            (None, Overlay::Predicted) => Some(parallel::run_sliced(&loaded.frame, &pipeline, cfg.run.slices, cfg.run.units)?.0),
            (None, Overlay::Truth) => loaded.truth,
        };
        images.push((loaded.name, render::render_ppm(&image, mask.as_ref())?));
    }
    create_dir(&cfg.run.out)?;
    for (name, ppm) in images {
        let path = cfg.run.out.join(format!("{name}.ppm"));
        write_file(&path, ppm)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn decode_ssl(common: &Common, files: &[PathBuf]) -> anyhow::Result<()> {
    let mut common = common.clone();
    common.ssl.extend(files.iter().cloned());
    let r = common.resolve()?;
    let cfg = &r.cfg;
    if cfg.input.ssl.is_empty() {
        return Err(usage("no capture files given"));
    }
    let range = cfg.frame_range()?;
    let mut raws = Vec::new();
    for (i, path) in cfg.input.ssl.iter().enumerate() {
        if range.as_ref().is_none_or(|r| r.contains(&(i as u32))) {
            if !path.is_file() {
                return Err(usage(format!("{}: no such capture", path.display())));
            }
            raws.push((path, ssl::load_raw(path)?));
        }
    }
    create_dir(&cfg.run.out)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (path, raw) in raws {
        let frame = ssl::decode_ssl_frame(&raw, cfg.input.parity);
        let grid = cfg.run.out.join(format!("{}.grid", stem(path)));
        write_file(&grid, ssl::grid_bytes(&frame))?;
        writeln!(out, "{} -> {}", path.display(), grid.display())?;
        ssl::write_stats(&mut out, &ssl::subframe_stats(&frame))?;
    }
    Ok(())
}

const SYNTH_SPACING: f64 = 1.0;

fn synth(common: &Common, with_ssl: bool) -> anyhow::Result<()> {
    let r = common.resolve()?;
    let cfg = &r.cfg;
    let frames = match cfg.frame_range()? {
        Some(range) => range.end() + 1,
        None => 10,
    };
    let seed = cfg.ransac.seed;
    let scene = sim::drive_scene(seed, frames, SYNTH_SPACING);
    sim::write_sequence(&cfg.run.out, &cfg.input.sequence, &scene, frames, SYNTH_SPACING, &sim::Hdl64::default(), seed)?;
    println!("{}", kitti::sequence_dir(&cfg.run.out, &cfg.input.sequence).display());
    if with_ssl {
        let dir = cfg.run.out.join("ssl");
        create_dir(&dir)?;
        let rig = sim::SslRig::default();
        for f in 0..frames {
            let raw = sim::ssl_capture(&scene, f as f64 * SYNTH_SPACING, -2.0, &rig, cfg.input.parity, seed.wrapping_add(f as u64));
            ssl::save_raw(dir.join(format!("{}.sslraw", kitti::frame_file_stem(f))), &raw)?;
        }
        println!("{}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Segment(c) => segment(c),
        Command::Eval(c) => evaluate(c),
        Command::Bench { common, sequential } => bench(common, *sequential),
        Command::Render { common, overlay, mask } => render_frames(common, *overlay, mask.as_deref()),
        Command::DecodeSsl { common, files } => decode_ssl(common, files),
        Command::Synth { common, with_ssl } => synth(common, *with_ssl),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("groundseg: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("groundseg: {e:#}");
            ExitCode::FAILURE
        }
    }
}
