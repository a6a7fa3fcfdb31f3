// SPDX-License-Identifier: Apache-2.0

//! Solid-state LiDAR frame decoding.
//!
//! The sensor emits 78,750 records per frame as a single column: five
//! consecutive blocks of 15,750 records, one per subframe. Inside a block the
//! records fill a 126x125 grid row by row in serpentine (zig-zag) order, so
//! every other row arrives reversed. Decoding undoes the serpentine and lays the
//! five subframes side by side into one 126x625 organized frame.

use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Point, PointCloud, Result};

pub const SUBFRAME_ROWS: usize = 126;
pub const SUBFRAME_COLS: usize = 125;
pub const SUBFRAME_COUNT: usize = 5;
pub const SUBFRAME_RECORDS: usize = SUBFRAME_ROWS * SUBFRAME_COLS;
pub const FRAME_COLS: usize = SUBFRAME_COLS * SUBFRAME_COUNT;
pub const FRAME_RECORDS: usize = SUBFRAME_RECORDS * SUBFRAME_COUNT;

const RAW_RECORD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SslRecord {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub valid: bool,
}

impl SslRecord {
    pub const INVALID: SslRecord = SslRecord {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        valid: false,
    };

    pub fn new(x: f32, y: f32, z: f32) -> Self {
        Self { x, y, z, valid: true }
    }
}

/// Which 0-based rows of each subframe arrive reversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    #[default]
    Even,
    Odd,
}

impl Parity {
    pub fn reverses(self, row: usize) -> bool {
        match self {
            Parity::Even => row % 2 == 0,
            Parity::Odd => row % 2 == 1,
        }
    }
}

impl FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            other => Err(Error::config(format!("parity must be even|odd, got {other:?}"))),
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

/// One frame in sensor emission order. Always exactly [`FRAME_RECORDS`] long.
#[derive(Debug, Clone, PartialEq)]
pub struct SslRawFrame {
    records: Vec<SslRecord>,
}

impl SslRawFrame {
    pub fn new(records: Vec<SslRecord>) -> Result<Self> {
        if records.len() != FRAME_RECORDS {
            return Err(Error::RecordCount {
                expected: FRAME_RECORDS,
                actual: records.len(),
            });
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SslRecord] {
        &self.records
    }
}

/// Raw record index that lands in subframe `sub`, row `row`, subframe column `col`.
pub fn raw_index(sub: usize, row: usize, col: usize, parity: Parity) -> usize {
    let c = if parity.reverses(row) {
        SUBFRAME_COLS - 1 - col
    } else {
        col
    };
    sub * SUBFRAME_RECORDS + row * SUBFRAME_COLS + c
}

/// Decoded 126x625 organized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SslFrame {
    cells: Vec<SslRecord>,
    index_map: Vec<u32>,
}

pub fn decode_ssl_frame(raw: &SslRawFrame, parity: Parity) -> SslFrame {
    let mut cells = Vec::with_capacity(FRAME_RECORDS);
    let mut index_map = Vec::with_capacity(FRAME_RECORDS);
    for row in 0..SUBFRAME_ROWS {
        for sub in 0..SUBFRAME_COUNT {
            for col in 0..SUBFRAME_COLS {
                let idx = raw_index(sub, row, col, parity);
                cells.push(raw.records[idx]);
                index_map.push(idx as u32);
            }
        }
    }
    SslFrame { cells, index_map }
}

impl SslFrame {
    /// Builds an organized frame directly from row-major cells (e.g. a grid
    /// dump). The index map is the emission order implied by `parity`.
    pub fn from_cells(cells: Vec<SslRecord>, parity: Parity) -> Result<Self> {
        if cells.len() != FRAME_RECORDS {
            return Err(Error::RecordCount {
                expected: FRAME_RECORDS,
                actual: cells.len(),
            });
        }
        let index_map = (0..FRAME_RECORDS)
            .map(|p| {
                let (row, c) = (p / FRAME_COLS, p % FRAME_COLS);
                raw_index(c / SUBFRAME_COLS, row, c % SUBFRAME_COLS, parity) as u32
            })
            .collect();
        Ok(Self { cells, index_map })
    }

    pub fn rows(&self) -> usize {
        SUBFRAME_ROWS
    }

    pub fn cols(&self) -> usize {
        FRAME_COLS
    }

    pub fn cell(&self, row: usize, col: usize) -> &SslRecord {
        &self.cells[row * FRAME_COLS + col]
    }

    pub fn cells(&self) -> &[SslRecord] {
        &self.cells
    }

    /// Raw record index of every cell, row-major.
    pub fn index_map(&self) -> &[u32] {
        &self.index_map
    }

    pub fn subframe_of_column(col: usize) -> usize {
        col / SUBFRAME_COLS
    }

    pub fn subframe(&self, index: usize) -> Result<SubframeView<'_>> {
        if index >= SUBFRAME_COUNT {
            return Err(Error::OutOfRange {
                index,
                limit: SUBFRAME_COUNT,
            });
        }
        Ok(SubframeView { frame: self, index })
    }

    /// Re-serializes into emission order through the index map.
    pub fn to_raw(&self) -> SslRawFrame {
        let mut records = vec![SslRecord::INVALID; FRAME_RECORDS];
        for (cell, &idx) in self.cells.iter().zip(&self.index_map) {
            records[idx as usize] = *cell;
        }
        SslRawFrame { records }
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.valid).count()
    }
}

/// Read-only view of one 126x125 subframe.
#[derive(Debug, Clone, Copy)]
pub struct SubframeView<'a> {
    frame: &'a SslFrame,
    index: usize,
}

impl<'a> SubframeView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn columns(&self) -> Range<usize> {
        self.index * SUBFRAME_COLS..(self.index + 1) * SUBFRAME_COLS
    }

    pub fn rows(&self) -> usize {
        SUBFRAME_ROWS
    }

    pub fn cols(&self) -> usize {
        SUBFRAME_COLS
    }

    pub fn get(&self, row: usize, col: usize) -> &'a SslRecord {
        assert!(col < SUBFRAME_COLS, "subframe column {col} out of range");
        self.frame.cell(row, self.index * SUBFRAME_COLS + col)
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a SslRecord> + '_ {
        (0..SUBFRAME_ROWS).flat_map(move |r| (0..SUBFRAME_COLS).map(move |c| self.get(r, c)))
    }
}

/// Valid cells as a point cloud in row-major scan order, plus the grid cell
/// (row-major pixel index) each point came from.
pub fn ssl_to_point_cloud(frame: &SslFrame) -> (PointCloud, Vec<usize>) {
    let mut cloud = PointCloud::default();
    let mut pixels = Vec::new();
    for (p, cell) in frame.cells.iter().enumerate() {
        if cell.valid {
            cloud.points.push(Point::new(cell.x, cell.y, cell.z, 0.0));
            pixels.push(p);
        }
    }
    (cloud, pixels)
}

// ---- file formats ----

pub fn parse_sslraw(bytes: &[u8]) -> Result<SslRawFrame> {
    if bytes.len() != FRAME_RECORDS * RAW_RECORD {
        return Err(Error::RecordCount {
            expected: FRAME_RECORDS,
            actual: bytes.len() / RAW_RECORD,
        });
    }
    let records = bytes
        .chunks_exact(RAW_RECORD)
        .map(|rec| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            let (x, y, z) = (f(0), f(1), f(2));
            if x == 0.0 && y == 0.0 && z == 0.0 {
                SslRecord::INVALID
            } else {
                SslRecord::new(x, y, z)
            }
        })
        .collect();
    SslRawFrame::new(records)
}

pub fn sslraw_bytes(raw: &SslRawFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_RECORDS * RAW_RECORD);
    for r in &raw.records {
        let xyz = if r.valid { [r.x, r.y, r.z] } else { [0.0; 3] };
        for v in xyz {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_ssl_csv(text: &str) -> Result<SslRawFrame> {
    let mut records = Vec::with_capacity(FRAME_RECORDS);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let bad = || Error::Parse(format!("line {}: expected x,y,z,valid", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [x, y, z, valid] = fields[..] else {
            return Err(bad());
        };
        let num = |s: &str| s.parse::<f32>().map_err(|_| bad());
        let valid = match valid {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad()),
        };
        records.push(SslRecord {
            x: num(x)?,
            y: num(y)?,
            z: num(z)?,
            valid,
        });
    }
    SslRawFrame::new(records)
}

pub fn ssl_csv_string(raw: &SslRawFrame) -> String {
    let mut out = String::with_capacity(FRAME_RECORDS * 24);
    out.push_str("x,y,z,valid\n");
    for r in &raw.records {
        out.push_str(&format!("{},{},{},{}\n", r.x, r.y, r.z, r.valid as u8));
    }
    out
}

/// Loads a `.sslraw` capture or, for a `.csv` extension, the CSV fixture form.
pub fn load_raw(path: impl AsRef<Path>) -> Result<SslRawFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        parse_ssl_csv(&text)
    } else {
        parse_sslraw(&bytes)
    }
}

pub fn save_raw(path: impl AsRef<Path>, raw: &SslRawFrame) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        ssl_csv_string(raw).into_bytes()
    } else {
        sslraw_bytes(raw)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Organized grid dump: `u32` rows, `u32` cols (little-endian), then
/// rows*cols little-endian `f32` xyz triples row-major, then rows*cols
/// validity bytes.
pub fn grid_bytes(frame: &SslFrame) -> Vec<u8> {
    let n = frame.cells.len();
    let mut out = Vec::with_capacity(8 + n * 13);
    out.extend_from_slice(&(frame.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(frame.cols() as u32).to_le_bytes());
    for c in &frame.cells {
        for v in [c.x, c.y, c.z] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend(frame.cells.iter().map(|c| c.valid as u8));
    out
}

pub fn parse_grid(bytes: &[u8], parity: Parity) -> Result<SslFrame> {
    let bad = |msg: &str| Error::Parse(format!("organized frame: {msg}"));
    if bytes.len() < 8 {
        return Err(bad("truncated header"));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rows != SUBFRAME_ROWS || cols != FRAME_COLS {
        return Err(Error::Dimension {
            expected: format!("{SUBFRAME_ROWS}x{FRAME_COLS}"),
            actual: format!("{rows}x{cols}"),
        });
    }
    let n = rows * cols;
    if bytes.len() != 8 + n * 13 {
        return Err(bad("unexpected length"));
    }
    let (xyz, valid) = bytes[8..].split_at(n * 12);
    let cells = xyz
        .chunks_exact(12)
        .zip(valid)
        .map(|(rec, &v)| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            SslRecord {
                x: f(0),
                y: f(1),
                z: f(2),
                valid: v != 0,
            }
        })
        .collect();
    SslFrame::from_cells(cells, parity)
}

/// Per-subframe summary in the style of a capture sanity check.
#[derive(Debug, Clone, PartialEq)]
pub struct SubframeStats {
    pub index: usize,
    pub points: usize,
    pub valid: usize,
    /// `[min, max]` of x, y, z over valid cells; `None` when none are valid.
    pub bounds: Option<[[f32; 2]; 3]>,
}

pub fn subframe_stats(frame: &SslFrame) -> Vec<SubframeStats> {
    (0..SUBFRAME_COUNT)
        .map(|i| {
            let view = frame.subframe(i).expect("index in range");
            let mut bounds: Option<[[f32; 2]; 3]> = None;
            let mut valid = 0;
            for rec in view.iter().filter(|r| r.valid) {
                valid += 1;
                let b = bounds.get_or_insert([[f32::INFINITY, f32::NEG_INFINITY]; 3]);
                for (axis, v) in [rec.x, rec.y, rec.z].into_iter().enumerate() {
                    b[axis][0] = b[axis][0].min(v);
                    b[axis][1] = b[axis][1].max(v);
                }
            }
            SubframeStats {
                index: i,
                points: SUBFRAME_RECORDS,
                valid,
                bounds,
            }
        })
        .collect()
}

pub fn write_stats(mut w: impl Write, stats: &[SubframeStats]) -> std::io::Result<()> {
    writeln!(w, "subframes: {}", stats.len())?;
    let mut total = 0;
    for s in stats {
        total += s.valid;
        write!(w, "subframe {}: points {} valid {}", s.index, s.points, s.valid)?;
        if let Some(b) = s.bounds {
            for (name, [lo, hi]) in ["x", "y", "z"].iter().zip(b) {
                write!(w, " {name}[{lo:.3}, {hi:.3}]")?;
            }
        }
        writeln!(w)?;
    }
    writeln!(w, "valid total: {total} / {FRAME_RECORDS}")
}
