// SPDX-License-Identifier: Apache-2.0

//! SemanticKITTI scan and label ingestion.
//!
//! Scans are headerless little-endian `f32` quadruples `(x, y, z, intensity)`.
//! Labels are one little-endian `u32` per point whose lower 16 bits hold the
//! semantic class. Layout on disk:
//! `sequences/<NN>/velodyne/<FFFFFF>.bin` and `sequences/<NN>/labels/<FFFFFF>.label`.

use std::collections::BTreeSet;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use crate::mask::GroundTruthMask;
use crate::{Error, GroundMask, Point, PointCloud, Result};

const POINT_RECORD: usize = 16;
const LABEL_RECORD: usize = 4;

pub const ROAD: u16 = 40;
pub const PARKING: u16 = 44;
pub const SIDEWALK: u16 = 48;
pub const OTHER_GROUND: u16 = 49;
pub const LANE_MARKING: u16 = 60;
pub const TERRAIN: u16 = 72;

/// Semantic class ids merged into the binary ground class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundClasses(pub BTreeSet<u16>);

impl GroundClasses {
    /// road, parking, sidewalk, other-ground.
    pub fn standard() -> Self {
        GroundClasses([ROAD, PARKING, SIDEWALK, OTHER_GROUND].into_iter().collect())
    }

    /// [`standard`](Self::standard) plus lane-marking and terrain.
    pub fn extended() -> Self {
        let mut set = Self::standard().0;
        set.extend([LANE_MARKING, TERRAIN]);
        GroundClasses(set)
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "standard" => Ok(Self::standard()),
            "extended" => Ok(Self::extended()),
            other => Err(Error::config(format!(
                "unknown ground class preset {other:?} (expected standard|extended)"
            ))),
        }
    }

    pub fn contains(&self, label: u32) -> bool {
        self.0.contains(&((label & 0xFFFF) as u16))
    }
}

impl Default for GroundClasses {
    fn default() -> Self {
        Self::standard()
    }
}

/// A loaded scan plus the original indices of any non-finite records that were
/// dropped (ascending).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedScan {
    pub cloud: PointCloud,
    pub dropped: Vec<usize>,
}

impl LoadedScan {
    /// Number of records in the file, including dropped ones.
    pub fn original_len(&self) -> usize {
        self.cloud.len() + self.dropped.len()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_record(path: &Path, bytes: &[u8], record: usize, kind: &'static str) -> Result<()> {
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            kind,
            len: bytes.len() as u64,
            record,
        });
    }
    Ok(())
}

pub fn parse_velodyne(bytes: &[u8]) -> LoadedScan {
    let mut scan = LoadedScan::default();
    for (i, rec) in bytes.chunks_exact(POINT_RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let p = Point::new(f(0), f(1), f(2), f(3));
        if p.is_finite() {
            scan.cloud.points.push(p);
        } else {
            scan.dropped.push(i);
        }
    }
    scan
}

pub fn load_velodyne_bin(path: impl AsRef<Path>) -> Result<LoadedScan> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_record(path, &bytes, POINT_RECORD, "scan")?;
    Ok(parse_velodyne(&bytes))
}

pub fn velodyne_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_velodyne_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, velodyne_bytes(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_raw_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_record(path, &bytes, LABEL_RECORD, "label file")?;
    Ok(bytes
        .chunks_exact(LABEL_RECORD)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn labels_to_mask(labels: &[u32], classes: &GroundClasses) -> GroundTruthMask {
    GroundMask(labels.iter().map(|&l| classes.contains(l)).collect())
}

pub fn load_labels(path: impl AsRef<Path>, classes: &GroundClasses) -> Result<GroundTruthMask> {
    Ok(labels_to_mask(&read_raw_labels(path)?, classes))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Scan and ground truth for one frame, filtered identically.
#[derive(Debug, Clone)]
pub struct LabeledScan {
    pub scan: LoadedScan,
    pub truth: GroundTruthMask,
}

/// Loads a scan/label pair, checking that the label count matches the raw
/// record count and removing truth entries of dropped points.
pub fn load_pair(entry: &FrameEntry, classes: &GroundClasses) -> Result<LabeledScan> {
    let scan = load_velodyne_bin(&entry.scan)?;
    let truth = load_labels(&entry.label, classes)?;
    if truth.len() != scan.original_len() {
        return Err(Error::LabelCount {
            labels: truth.len(),
            points: scan.original_len(),
        });
    }
    let truth = truth.without_indices(&scan.dropped);
    Ok(LabeledScan { scan, truth })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub frame: u32,
    pub scan: PathBuf,
    pub label: PathBuf,
}

pub fn sequence_dir(root: &Path, sequence: &str) -> PathBuf {
    root.join("sequences").join(sequence)
}

pub fn frame_file_stem(frame: u32) -> String {
    format!("{frame:06}")
}

/// Enumerates `(scan, label)` pairs of one sequence sorted by frame number,
/// optionally restricted to an inclusive frame range.
pub fn list_sequence(
    root: impl AsRef<Path>,
    sequence: &str,
    frames: Option<RangeInclusive<u32>>,
) -> Result<Vec<FrameEntry>> {
    let seq = sequence_dir(root.as_ref(), sequence);
    let velodyne = seq.join("velodyne");
    let labels = seq.join("labels");
    for dir in [&velodyne, &labels] {
        if !dir.is_dir() {
            return Err(Error::MissingDirectory(dir.clone()));
        }
    }
    let mut entries = Vec::new();
    for item in fs::read_dir(&velodyne).map_err(|e| Error::io(&velodyne, e))? {
        let path = item.map_err(|e| Error::io(&velodyne, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("bin") {
            continue;
        }
        let Some(frame) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u32>().ok())
        else {
            continue;
        };
        if frames.as_ref().is_some_and(|r| !r.contains(&frame)) {
            continue;
        }
        let label = labels.join(format!("{}.label", frame_file_stem(frame)));
        if !label.is_file() {
            return Err(Error::MissingLabel { scan: path, label });
        }
        entries.push(FrameEntry {
            frame,
            scan: path,
            label,
        });
    }
    entries.sort_by_key(|e| e.frame);
    Ok(entries)
}
