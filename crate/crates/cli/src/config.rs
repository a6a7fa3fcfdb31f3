// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a TOML file with one section per module. Every field has
//! a default, so an empty file is a valid configuration.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use groundseg::parallel::{MethodId, Pipeline};
use groundseg::ssl::Parity;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// The configuration shipped in `config/default.toml`.
#[cfg(test)]
const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub input: InputSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
    pub projection: groundseg::range_image::ProjectionConfig,
    pub depth: groundseg::depth::DepthParams,
    pub ransac: groundseg::ransac::RansacParams,
    pub smrf: groundseg::smrf::SmrfParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = Pipeline::default();
        RunConfig {
            run: RunSection::default(),
            input: InputSection::default(),
            eval: EvalSection::default(),
            bench: BenchSection::default(),
            projection: p.projection,
            depth: p.depth,
            ransac: p.ransac,
            smrf: p.smrf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: MethodId,
    pub slices: usize,
    pub units: usize,
    /// Inclusive frame range `a..b`; empty means every frame.
    pub frames: String,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            method: MethodId::Depth,
            slices: 1,
            units: 1,
            frames: String::new(),
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// SemanticKITTI root (the directory holding `sequences/`).
    pub dataset: Option<PathBuf>,
    pub sequence: String,
    /// `standard` or `extended`.
    pub ground_classes: String,
    /// Solid-state captures (`.sslraw` or `.csv`).
    pub ssl: Vec<PathBuf>,
    pub parity: Parity,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            dataset: None,
            sequence: "00".into(),
            ground_classes: "standard".into(),
            ssl: Vec::new(),
            parity: Parity::Even,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub methods: Vec<MethodId>,
    pub slices: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            methods: MethodId::ALL.to_vec(),
            slices: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub units: Vec<usize>,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            units: vec![1, 2, 3, 5],
            reps: 11,
            warmup: 2,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        toml::from_str(text).map_err(|e| UsageError(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline {
            method: self.run.method,
            projection: self.projection,
            depth: self.depth,
            ransac: self.ransac,
            smrf: self.smrf,
        }
    }

    pub fn frame_range(&self) -> Result<Option<RangeInclusive<u32>>, UsageError> {
        parse_frames(&self.run.frames)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let usage = |e: groundseg::Error| UsageError(e.to_string());
        for m in MethodId::ALL {
            self.pipeline().with_method(m).validate().map_err(usage)?;
        }
        groundseg::parallel::allocate(self.run.slices, self.run.units).map_err(usage)?;
        groundseg::kitti::GroundClasses::from_preset(&self.input.ground_classes).map_err(usage)?;
        self.frame_range()?;
        Ok(())
    }
}

/// `a..b` (inclusive), `a..=b`, or a single frame `a`; empty for all frames.
pub fn parse_frames(s: &str) -> Result<Option<RangeInclusive<u32>>, UsageError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| UsageError(format!("invalid frame range {s:?} (expected a..b)")));
    let range = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?,
        None => {
            let f = num(s)?;
            f..=f
        }
    };
    if range.is_empty() {
        return Err(UsageError(format!("empty frame range {s:?}")));
    }
    Ok(Some(range))
}
