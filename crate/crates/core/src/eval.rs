// SPDX-License-Identifier: Apache-2.0

//! IoU / F1 scoring with ground as the positive class.

use std::fmt::Write as _;

use crate::{Error, GroundMask, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalStats {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl EvalStats {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Neither truth nor prediction contains ground; IoU and F1 are 1 by
    /// convention and such frames are counted separately.
    pub fn is_empty_ground(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn iou(&self) -> f64 {
        if self.is_empty_ground() {
            return 1.0;
        }
        self.tp as f64 / (self.tp + self.fp + self.fn_) as f64
    }

    pub fn f1(&self) -> f64 {
        if self.is_empty_ground() {
            return 1.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

impl std::ops::Add for EvalStats {
    type Output = EvalStats;

    fn add(self, o: EvalStats) -> EvalStats {
        EvalStats {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &GroundMask, truth: &GroundMask) -> Result<EvalStats> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut s = EvalStats::default();
    for (&p, &t) in pred.0.iter().zip(&truth.0) {
        match (p, t) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => s.tn += 1,
        }
    }
    Ok(s)
}

pub fn iou(stats: &EvalStats) -> f64 {
    stats.iou()
}

pub fn f1(stats: &EvalStats) -> f64 {
    stats.f1()
}

/// Per-frame values with their arithmetic mean and sample standard deviation
/// (`n - 1`; zero for a single value).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl AggregateStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { values, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub iou: AggregateStats,
    pub f1: AggregateStats,
    /// Frames scored under the empty-ground convention.
    pub empty_ground_frames: usize,
}

pub fn aggregate(per_frame: &[(f64, f64)]) -> Result<Summary> {
    Ok(Summary {
        iou: AggregateStats::from_values(per_frame.iter().map(|p| p.0).collect())?,
        f1: AggregateStats::from_values(per_frame.iter().map(|p| p.1).collect())?,
        empty_ground_frames: 0,
    })
}

/// Aggregates per-frame confusion counts, tracking empty-ground frames.
pub fn summarize(stats: &[EvalStats]) -> Result<Summary> {
    let pairs: Vec<(f64, f64)> = stats.iter().map(|s| (s.iou(), s.f1())).collect();
    let mut summary = aggregate(&pairs)?;
    summary.empty_ground_frames = stats.iter().filter(|s| s.is_empty_ground()).count();
    Ok(summary)
}

/// One evaluated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub method: String,
    pub slices: usize,
    pub frame: String,
    pub stats: EvalStats,
}

pub const FRAME_CSV_HEADER: &str = "method,slices,frame,iou,f1";
pub const SUMMARY_CSV_HEADER: &str = "method,slices,mean_iou,std_iou,mean_f1,std_f1";

pub fn frame_csv(rows: &[FrameScore]) -> String {
    let mut out = format!("{FRAME_CSV_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{:.6},{:.6}", r.method, r.slices, r.frame, r.stats.iou(), r.stats.f1()).unwrap();
    }
    out
}

/// One summary row per `(method, slices)` group, in first-appearance order.
pub fn summary_rows(rows: &[FrameScore]) -> Result<Vec<(String, usize, Summary)>> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.slices);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(m, k)| {
            let stats: Vec<EvalStats> = rows.iter().filter(|r| r.method == m && r.slices == k).map(|r| r.stats).collect();
            Ok((m, k, summarize(&stats)?))
        })
        .collect()
}

pub fn summary_csv(rows: &[FrameScore]) -> Result<String> {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for (m, k, s) in summary_rows(rows)? {
        writeln!(out, "{m},{k},{:.6},{:.6},{:.6},{:.6}", s.iou.mean, s.iou.std, s.f1.mean, s.f1.std).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(v: impl IntoIterator<Item = bool>) -> GroundMask {
        GroundMask(v.into_iter().collect())
    }

    #[test]
    fn perfect_and_degenerate_predictions() {
        let truth = mask((0..100).map(|i| i < 40));
        let s = confusion(&truth, &truth).unwrap();
        assert_eq!(s, EvalStats { tp: 40, fp: 0, fn_: 0, tn: 60 });
        assert_eq!((s.iou(), s.f1()), (1.0, 1.0));
        let s = confusion(&GroundMask::all(100, false), &truth).unwrap();
        assert_eq!(s, EvalStats { tp: 0, fp: 0, fn_: 40, tn: 60 });
        assert!(confusion(&GroundMask::all(3, false), &truth).is_err());
    }

    #[test]
    fn formula_values() {
        let s = EvalStats { tp: 3, fp: 1, fn_: 1, tn: 0 };
        assert!((iou(&s) - 0.6).abs() < 1e-15);
        assert!((f1(&s) - 0.75).abs() < 1e-15);
        let s = EvalStats { tp: 0, fp: 4, fn_: 0, tn: 9 };
        assert_eq!((s.iou(), s.f1()), (0.0, 0.0));
        let empty = EvalStats { tp: 0, fp: 0, fn_: 0, tn: 9 };
        assert!(empty.is_empty_ground());
        assert_eq!((empty.iou(), empty.f1()), (1.0, 1.0));
    }

    #[test]
    fn tally_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = mask((0..1000).map(|_| rng.random_bool(0.4)));
        let t = mask((0..1000).map(|_| rng.random_bool(0.5)));
        let s = confusion(&p, &t).unwrap();
        let mut tally = [0u64; 4];
        for i in 0..1000 {
            tally[(p.0[i] as usize) * 2 + t.0[i] as usize] += 1;
        }
        assert_eq!([s.tn, s.fn_, s.fp, s.tp], tally);
        assert_eq!(s.total(), 1000);
    }

    #[test]
    fn complement_swaps_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = mask((0..300).map(|_| rng.random_bool(0.3)));
        let t = mask((0..300).map(|_| rng.random_bool(0.6)));
        let s = confusion(&p, &t).unwrap();
        let c = confusion(&mask(p.0.iter().map(|b| !b)), &mask(t.0.iter().map(|b| !b))).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (s.tn, s.tp, s.fn_, s.fp));
    }

    #[test]
    fn aggregation() {
        let one = aggregate(&[(0.7, 0.8)]).unwrap();
        assert_eq!((one.iou.mean, one.iou.std), (0.7, 0.0));
        let flat = aggregate(&[(0.8, 0.8); 3]).unwrap();
        assert!((flat.iou.mean - 0.8).abs() < 1e-15);
        assert!(flat.iou.std < 1e-15);
        let s = AggregateStats::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(aggregate(&[]), Err(Error::Empty)));
    }

    #[test]
    fn csv_layout() {
        let rows: Vec<FrameScore> = ["depth", "ransac"]
            .iter()
            .flat_map(|m| {
                (1..=2).flat_map(move |k| {
                    (0..3).map(move |f| FrameScore {
                        method: m.to_string(),
                        slices: k,
                        frame: format!("{f:06}"),
                        stats: EvalStats { tp: 3, fp: 1, fn_: 1, tn: 5 },
                    })
                })
            })
            .collect();
        let summary = summary_csv(&rows).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[0], SUMMARY_CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "depth,1,0.600000,0.000000,0.750000,0.000000");
        let frames = frame_csv(&rows);
        assert_eq!(frames.lines().nth(1), Some("depth,1,000000,0.600000,0.750000"));
    }

    proptest::proptest! {
        #[test]
        fn f1_dominates_iou(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000) {
            let s = EvalStats { tp, fp, fn_, tn: 0 };
            proptest::prop_assume!(!s.is_empty_ground());
            proptest::prop_assert!(s.f1() >= s.iou());
            proptest::prop_assert!((s.f1() - 2.0 * s.iou() / (1.0 + s.iou())).abs() < 1e-12);
        }
    }
}
