// SPDX-License-Identifier: Apache-2.0

//! Spherical projection, column slicing and mask merging.
//!
//! Column 0 sits at azimuth `+pi` and azimuth decreases to the right, so the
//! sensor's forward direction (azimuth 0) is the middle column. Row 0 is the
//! top of the vertical span.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ssl::SslFrame;
use crate::{Error, GroundMask, PointCloud, Result};

/// Sentinel for a pixel without a point.
pub const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub rows: usize,
    pub cols: usize,
    /// Elevation of the top edge of row 0, degrees.
    pub fov_up_deg: f64,
    /// Elevation of the bottom edge of the last row, degrees.
    pub fov_down_deg: f64,
}

impl Default for ProjectionConfig {
    /// HDL-64E geometry.
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 1024,
            fov_up_deg: 2.0,
            fov_down_deg: -24.8,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("range image needs at least one row and one column"));
        }
        if !(self.fov_up_deg > self.fov_down_deg) || !self.fov_up_deg.is_finite() || !self.fov_down_deg.is_finite() {
            return Err(Error::config("vertical span must satisfy fov_up > fov_down"));
        }
        Ok(())
    }

    /// Column of an azimuth (radians), in `0..cols`.
    pub fn column_of(&self, azimuth: f64) -> usize {
        azimuth_bin(azimuth, self.cols)
    }

    /// Row of an elevation (radians), or `None` outside the vertical span.
    pub fn row_of(&self, elevation: f64) -> Option<usize> {
        let top = self.fov_up_deg.to_radians();
        let bottom = self.fov_down_deg.to_radians();
        if !(bottom..=top).contains(&elevation) {
            return None;
        }
        let frac = (top - elevation) / (top - bottom);
        Some(((frac * self.rows as f64) as usize).min(self.rows - 1))
    }

    /// `(row, col)` bin of a point, or `None` if it is at the origin or outside the vertical span.
    pub fn bin_of(&self, xyz: [f64; 3]) -> Option<(usize, usize)> {
        let [x, y, z] = xyz;
        let planar = x.hypot(y);
        if planar == 0.0 && z == 0.0 {
            return None;
        }
        let row = self.row_of(z.atan2(planar))?;
        Some((row, self.column_of(y.atan2(x))))
    }
}

/// Bin of `azimuth` when the full circle is split into `bins` equal intervals,
/// starting at `+pi` and running clockwise.
pub fn azimuth_bin(azimuth: f64, bins: usize) -> usize {
    // -pi and +pi are the same direction; both land in the first bin
    let azimuth = if azimuth <= -PI { PI } else { azimuth };
    let frac = (PI - azimuth) / (2.0 * PI);
    ((frac * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    rows: usize,
    cols: usize,
    range: Vec<f32>,
    xyz: Vec<[f32; 3]>,
    point_index: Vec<u32>,
    /// Length of the per-point mask that merges produce.
    source_len: usize,
    /// Azimuth at the left edge of column 0 and at the right edge of the last column, radians.
    pub azimuth_span: [f64; 2],
    /// Elevation at the top and bottom edges, radians.
    pub vertical_span: [f64; 2],
    /// Points excluded because they fall outside the vertical span (or sit at the origin).
    pub out_of_span: usize,
    /// Points that lost a bin to a nearer point.
    pub collisions: usize,
}

pub fn project_spherical(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<RangeImage> {
    cfg.validate()?;
    let n = cfg.rows * cfg.cols;
    let mut image = RangeImage {
        rows: cfg.rows,
        cols: cfg.cols,
        range: vec![0.0; n],
        xyz: vec![[0.0; 3]; n],
        point_index: vec![EMPTY; n],
        source_len: cloud.len(),
        azimuth_span: [PI, -PI],
        vertical_span: [cfg.fov_up_deg.to_radians(), cfg.fov_down_deg.to_radians()],
        out_of_span: 0,
        collisions: 0,
    };
    for (i, p) in cloud.iter().enumerate() {
        let Some((row, col)) = cfg.bin_of(p.xyz_f64()) else {
            image.out_of_span += 1;
            continue;
        };
        let pix = row * cfg.cols + col;
        let r = p.range() as f32;
        if image.point_index[pix] != EMPTY {
            image.collisions += 1;
            // strict: on equal range the earlier point keeps the bin
            if r >= image.range[pix] {
                continue;
            }
        }
        image.range[pix] = r;
        image.xyz[pix] = [p.x, p.y, p.z];
        image.point_index[pix] = i as u32;
    }
    Ok(image)
}

impl RangeImage {
    /// Builds an image from organized cells. Each cell is `Some((xyz, point
    /// index))` for a return; cells with zero range are treated as empty.
    pub fn from_cells<I>(rows: usize, cols: usize, cells: I, source_len: usize) -> Result<Self>
    where
        I: IntoIterator<Item = Option<([f32; 3], u32)>>,
    {
        if rows == 0 || cols == 0 {
            return Err(Error::config("range image needs at least one row and one column"));
        }
        let n = rows * cols;
        let mut image = RangeImage {
            rows,
            cols,
            range: Vec::with_capacity(n),
            xyz: Vec::with_capacity(n),
            point_index: Vec::with_capacity(n),
            source_len,
            azimuth_span: [f64::NAN; 2],
            vertical_span: [f64::NAN; 2],
            out_of_span: 0,
            collisions: 0,
        };
        for cell in cells.into_iter().take(n) {
            let (xyz, idx, r) = match cell {
                Some((xyz, idx)) => {
                    let [x, y, z] = xyz.map(f64::from);
                    let r = (x * x + y * y + z * z).sqrt() as f32;
                    if r > 0.0 {
                        if idx as usize >= source_len {
                            return Err(Error::OutOfRange {
                                index: idx as usize,
                                limit: source_len,
                            });
                        }
                        (xyz, idx, r)
                    } else {
                        ([0.0; 3], EMPTY, 0.0)
                    }
                }
                None => ([0.0; 3], EMPTY, 0.0),
            };
            image.xyz.push(xyz);
            image.point_index.push(idx);
            image.range.push(r);
        }
        if image.range.len() != n {
            return Err(Error::Dimension {
                expected: format!("{n} cells"),
                actual: format!("{} cells", image.range.len()),
            });
        }
        Ok(image)
    }

    /// An organized SSL frame used directly as a range image. Point indices are
    /// raw record indices, so merged masks are in emission order (78,750 long).
    pub fn from_ssl(frame: &SslFrame) -> Self {
        let cells = frame
            .cells()
            .iter()
            .zip(frame.index_map())
            .map(|(c, &idx)| c.valid.then_some(([c.x, c.y, c.z], idx)));
        Self::from_cells(frame.rows(), frame.cols(), cells, frame.cells().len())
            .expect("SSL frame dimensions are fixed")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    fn at(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn range(&self, row: usize, col: usize) -> f32 {
        self.range[self.at(row, col)]
    }

    pub fn xyz(&self, row: usize, col: usize) -> [f32; 3] {
        self.xyz[self.at(row, col)]
    }

    pub fn point_index(&self, row: usize, col: usize) -> Option<usize> {
        match self.point_index[self.at(row, col)] {
            EMPTY => None,
            i => Some(i as usize),
        }
    }

    pub fn is_empty_pixel(&self, row: usize, col: usize) -> bool {
        self.point_index[self.at(row, col)] == EMPTY
    }

    pub fn ranges(&self) -> &[f32] {
        &self.range
    }

    pub fn point_indices(&self) -> &[u32] {
        &self.point_index
    }

    pub fn occupied(&self) -> usize {
        self.point_index.iter().filter(|&&i| i != EMPTY).count()
    }

    pub fn full_view(&self) -> ImageView<'_> {
        ImageView {
            image: self,
            cols: 0..self.cols,
        }
    }

    /// Per-point mask from a pixel mask over the whole image.
    pub fn pixel_to_point_mask(&self, pixels: &PixelMask) -> Result<GroundMask> {
        merge_masks(
            std::slice::from_ref(pixels),
            self,
            &SliceSpec {
                intervals: vec![0..self.cols],
            },
        )
    }
}

/// `K` contiguous column intervals that partition `[0, cols)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSpec {
    pub intervals: Vec<Range<usize>>,
}

impl SliceSpec {
    /// Near-equal partition: the first `cols % k` intervals are one wider.
    pub fn new(cols: usize, k: usize) -> Result<Self> {
        if k == 0 || k > cols {
            return Err(Error::config(format!("slice count {k} must be in 1..={cols}")));
        }
        Ok(SliceSpec {
            intervals: balanced_blocks(cols, k),
        })
    }

    pub fn slice_count(&self) -> usize {
        self.intervals.len()
    }

    pub fn owner_of(&self, col: usize) -> Option<usize> {
        self.intervals.iter().position(|r| r.contains(&col))
    }
}

/// Splits `0..n` into `parts` contiguous ranges whose lengths differ by at most
/// one, longer ranges first.
pub fn balanced_blocks(n: usize, parts: usize) -> Vec<Range<usize>> {
    let (q, r) = (n / parts, n % parts);
    (0..parts)
        .map(|i| {
            let start = i * q + i.min(r);
            start..start + q + usize::from(i < r)
        })
        .collect()
}

/// Read-only band of columns of a parent image.
#[derive(Debug, Clone)]
pub struct ImageView<'a> {
    image: &'a RangeImage,
    cols: Range<usize>,
}

impl<'a> ImageView<'a> {
    pub fn parent(&self) -> &'a RangeImage {
        self.image
    }

    pub fn columns(&self) -> Range<usize> {
        self.cols.clone()
    }

    pub fn rows(&self) -> usize {
        self.image.rows
    }

    pub fn cols(&self) -> usize {
        self.cols.len()
    }

    pub fn range(&self, row: usize, col: usize) -> f32 {
        self.image.range(row, self.cols.start + col)
    }

    pub fn xyz(&self, row: usize, col: usize) -> [f32; 3] {
        self.image.xyz(row, self.cols.start + col)
    }

    pub fn point_index(&self, row: usize, col: usize) -> Option<usize> {
        self.image.point_index(row, self.cols.start + col)
    }

    pub fn is_empty_pixel(&self, row: usize, col: usize) -> bool {
        self.image.is_empty_pixel(row, self.cols.start + col)
    }
}

pub fn slice_columns(image: &RangeImage, k: usize) -> Result<(SliceSpec, Vec<ImageView<'_>>)> {
    let spec = SliceSpec::new(image.cols, k)?;
    let views = spec
        .intervals
        .iter()
        .map(|r| ImageView {
            image,
            cols: r.clone(),
        })
        .collect();
    Ok((spec, views))
}

/// Row-major boolean mask over a view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub rows: usize,
    pub cols: usize,
    pub flags: Vec<bool>,
}

impl PixelMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            flags: vec![false; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.flags[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Merges per-slice pixel masks into a per-point mask of `image.source_len()`
/// entries. Points without a pixel are non-ground.
pub fn merge_masks(slices: &[PixelMask], image: &RangeImage, spec: &SliceSpec) -> Result<GroundMask> {
    if slices.len() != spec.intervals.len() {
        return Err(Error::Dimension {
            expected: format!("{} slice masks", spec.intervals.len()),
            actual: format!("{} slice masks", slices.len()),
        });
    }
    let mut out = vec![false; image.source_len];
    for (mask, cols) in slices.iter().zip(&spec.intervals) {
        if mask.rows != image.rows || mask.cols != cols.len() || mask.flags.len() != mask.rows * mask.cols {
            return Err(Error::Dimension {
                expected: format!("{}x{}", image.rows, cols.len()),
                actual: format!("{}x{}", mask.rows, mask.cols),
            });
        }
        for row in 0..image.rows {
            for (local, col) in cols.clone().enumerate() {
                if mask.get(row, local) {
                    if let Some(i) = image.point_index(row, col) {
                        out[i] = true;
                    }
                }
            }
        }
    }
    Ok(GroundMask(out))
}

/// Splits point indices into `k` equal azimuth intervals (same orientation as
/// range-image columns). Indices stay ascending within each slice.
pub fn azimuth_partition(cloud: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::config("slice count must be at least 1"));
    }
    let mut parts = vec![Vec::new(); k];
    for (i, p) in cloud.iter().enumerate() {
        parts[azimuth_bin((p.y as f64).atan2(p.x as f64), k)].push(i);
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_aligned_point() {
        let cloud = PointCloud::new(vec![Point::new(10.0, 0.0, 0.0, 0.0)]);
        let img = project_spherical(&cloud, &ProjectionConfig::default()).unwrap();
        // azimuth 0 is at fraction 0.5 of the circle; elevation 0 is 2/26.8 of the span down
        let expect_row = (2.0f64 / 26.8 * 64.0).floor() as usize;
        assert_eq!(expect_row, 4);
        assert_eq!(img.point_index(4, 512), Some(0));
        assert_eq!(img.range(4, 512), 10.0);
        assert_eq!(img.occupied(), 1);
    }

    #[test]
    fn nearest_point_wins() {
        let cloud = PointCloud::new(vec![Point::new(7.0, 0.0, 0.0, 0.0), Point::new(5.0, 0.0, 0.0, 0.0)]);
        let img = project_spherical(&cloud, &ProjectionConfig::default()).unwrap();
        assert_eq!(img.point_index(4, 512), Some(1));
        assert_eq!(img.range(4, 512), 5.0);
        assert_eq!(img.collisions, 1);
    }

    #[test]
    fn out_of_span_and_degenerate_config() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 0.0, 5.0, 0.0), Point::new(0.0, 0.0, 0.0, 0.0)]);
        let img = project_spherical(&cloud, &ProjectionConfig::default()).unwrap();
        assert_eq!(img.occupied(), 0);
        assert_eq!(img.out_of_span, 2);
        let bad = ProjectionConfig {
            rows: 0,
            ..Default::default()
        };
        assert!(project_spherical(&cloud, &bad).is_err());
    }

    // Brute force: compute each point's bin from scratch, then keep the nearest per bin.
    #[test]
    fn projection_matches_binning_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = ProjectionConfig {
            rows: 16,
            cols: 32,
            ..Default::default()
        };
        let cloud: PointCloud = (0..100)
            .map(|_| Point::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..0.5), 0.0))
            .collect();
        let img = project_spherical(&cloud, &cfg).unwrap();

        let top = 2.0f64.to_radians();
        let bottom = (-24.8f64).to_radians();
        let mut best: Vec<Option<(f64, usize)>> = vec![None; 16 * 32];
        for (i, p) in cloud.iter().enumerate() {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            let el = z.atan2((x * x + y * y).sqrt());
            if el > top || el < bottom {
                continue;
            }
            let row = (((top - el) / (top - bottom)) * 16.0).floor().min(15.0) as usize;
            let mut az = y.atan2(x);
            if az <= -PI {
                az = PI;
            }
            let col = (((PI - az) / (2.0 * PI)) * 32.0).floor().min(31.0) as usize;
            let r = (x * x + y * y + z * z).sqrt() as f32 as f64;
            let slot = &mut best[row * 32 + col];
            if slot.is_none_or(|(br, _)| r < br) {
                *slot = Some((r, i));
            }
        }
        for row in 0..16 {
            for col in 0..32 {
                assert_eq!(img.point_index(row, col), best[row * 32 + col].map(|(_, i)| i), "pixel {row},{col}");
            }
        }
        // stored xyz re-bins into its own pixel
        for row in 0..16 {
            for col in 0..32 {
                if !img.is_empty_pixel(row, col) {
                    let xyz = img.xyz(row, col).map(f64::from);
                    assert_eq!(cfg.bin_of(xyz), Some((row, col)));
                }
            }
        }
    }

    #[test]
    fn slice_intervals() {
        let s = SliceSpec::new(625, 5).unwrap();
        assert_eq!(s.intervals, vec![0..125, 125..250, 250..375, 375..500, 500..625]);
        assert_eq!(SliceSpec::new(1024, 1).unwrap().intervals, vec![0..1024]);
        let widths: Vec<usize> = SliceSpec::new(1024, 5).unwrap().intervals.iter().map(|r| r.len()).collect();
        assert_eq!(widths, vec![205, 205, 205, 205, 204]);
        assert!(SliceSpec::new(4, 5).is_err());
        assert!(SliceSpec::new(4, 0).is_err());
    }

    #[test]
    fn partition_exhaustive() {
        for cols in 1..=4096 {
            for k in 1..=5.min(cols) {
                let spec = SliceSpec::new(cols, k).unwrap();
                let mut next = 0;
                let (mut lo, mut hi) = (usize::MAX, 0);
                for r in &spec.intervals {
                    assert_eq!(r.start, next);
                    next = r.end;
                    lo = lo.min(r.len());
                    hi = hi.max(r.len());
                }
                assert_eq!(next, cols);
                assert!(hi - lo <= 1);
            }
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RangeImage {
        let cells: Vec<_> = (0..rows * cols)
            .map(|p| rng.random_bool(0.6).then(|| ([rng.random_range(1.0..30.0f32), 0.5, -1.0], p as u32)))
            .collect();
        RangeImage::from_cells(rows, cols, cells, rows * cols).unwrap()
    }

    #[test]
    fn merge_edge_cases_and_dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 4, 9);
        let (spec, views) = slice_columns(&img, 3).unwrap();
        let full: Vec<PixelMask> = views
            .iter()
            .map(|v| PixelMask {
                rows: v.rows(),
                cols: v.cols(),
                flags: vec![true; v.rows() * v.cols()],
            })
            .collect();
        let merged = merge_masks(&full, &img, &spec).unwrap();
        for p in 0..36 {
            assert_eq!(merged.0[p], img.point_indices()[p] != EMPTY);
        }
        let none: Vec<PixelMask> = views.iter().map(|v| PixelMask::new(v.rows(), v.cols())).collect();
        assert_eq!(merge_masks(&none, &img, &spec).unwrap().count_ground(), 0);
        assert!(merge_masks(&none[..2], &img, &spec).is_err());
        let mut wrong = none.clone();
        wrong[1] = PixelMask::new(4, 2);
        assert!(matches!(merge_masks(&wrong, &img, &spec), Err(Error::Dimension { .. })));
    }

    #[test]
    fn merge_matches_pixel_ownership_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let img = random_image(&mut rng, 6, 23);
            let (spec, views) = slice_columns(&img, 3).unwrap();
            let masks: Vec<PixelMask> = views
                .iter()
                .map(|v| PixelMask {
                    rows: v.rows(),
                    cols: v.cols(),
                    flags: (0..v.rows() * v.cols()).map(|_| rng.random_bool(0.5)).collect(),
                })
                .collect();
            let merged = merge_masks(&masks, &img, &spec).unwrap();
            let mut oracle = vec![false; img.source_len()];
            for row in 0..6 {
                for col in 0..23 {
                    let owner = (0..3).find(|&s| spec.intervals[s].contains(&col)).unwrap();
                    let local = col - spec.intervals[owner].start;
                    if let Some(i) = img.point_index(row, col) {
                        oracle[i] = masks[owner].flags[row * masks[owner].cols + local];
                    }
                }
            }
            assert_eq!(merged.0, oracle);
        }
    }

    #[test]
    fn azimuth_partition_matches_columns() {
        let cloud = PointCloud::new(vec![
            Point::new(1.0, 0.0, 0.0, 0.0),
            Point::new(-1.0, 0.01, 0.0, 0.0),
            Point::new(-1.0, -0.01, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0, 0.0),
        ]);
        let parts = azimuth_partition(&cloud, 2).unwrap();
        // azimuth in (0, pi] is the left half
        assert_eq!(parts, vec![vec![1, 3], vec![0, 2]]);
        assert_eq!(azimuth_partition(&cloud, 1).unwrap(), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn projection_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud: PointCloud = (0..5000)
            .map(|_| Point::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(-3.0..2.0), 0.0))
            .collect();
        let a = project_spherical(&cloud, &ProjectionConfig::default()).unwrap();
        let b = project_spherical(&cloud, &ProjectionConfig::default()).unwrap();
        assert_eq!(a.ranges().iter().map(|r| r.to_bits()).collect::<Vec<_>>(), b.ranges().iter().map(|r| r.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.point_indices(), b.point_indices());
    }
}
