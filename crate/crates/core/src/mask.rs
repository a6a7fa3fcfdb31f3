// SPDX-License-Identifier: Apache-2.0

use crate::{Error, Result};

/// Per-point ground flags aligned to a [`PointCloud`](crate::PointCloud)'s order.
/// Used both for predictions and for ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct GroundMask(pub Vec<bool>);

pub type GroundTruthMask = GroundMask;

impl GroundMask {
    pub fn all(len: usize, value: bool) -> Self {
        GroundMask(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ground(&self) -> usize {
        self.0.iter().filter(|&&g| g).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Drops the entries at `dropped` (sorted ascending), mirroring the
    /// filtering applied to a scan at load time.
    pub fn without_indices(&self, dropped: &[usize]) -> GroundMask {
        if dropped.is_empty() {
            return self.clone();
        }
        let mut skip = dropped.iter().peekable();
        let mut out = Vec::with_capacity(self.len().saturating_sub(dropped.len()));
        for (i, &flag) in self.0.iter().enumerate() {
            if skip.peek() == Some(&&i) {
                skip.next();
                continue;
            }
            out.push(flag);
        }
        GroundMask(out)
    }

    /// Inverse of [`without_indices`](Self::without_indices): re-inserts
    /// `false` at each dropped position.
    pub fn with_dropped(&self, dropped: &[usize]) -> GroundMask {
        let total = self.len() + dropped.len();
        let mut out = Vec::with_capacity(total);
        let mut kept = self.0.iter();
        let mut skip = dropped.iter().peekable();
        for i in 0..total {
            if skip.peek() == Some(&&i) {
                skip.next();
                out.push(false);
            } else {
                out.push(*kept.next().unwrap_or(&false));
            }
        }
        GroundMask(out)
    }

    /// One byte per point, 0 or 1.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().map(|&g| g as u8).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        bytes
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Parse(format!("mask byte must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(GroundMask)
    }
}

impl From<Vec<bool>> for GroundMask {
    fn from(v: Vec<bool>) -> Self {
        GroundMask(v)
    }
}
