//! Geometric and temporal primitives shared by every pipeline stage.
//!
//! Boxes are stored center-based; the corner form is computed on demand.
//! All cell logic uses the fixed 32x32 pixel grid, and cell membership
//! requires strictly positive overlap area so labels are deterministic.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length in pixels of one proxy grid cell.
pub const CELL: u32 = 32;

/// Grid cell address as (column, row).
pub type CellCoord = (u32, u32);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    /// Resampling needs at least two detections to define a path.
    #[error("track with a single detection cannot be resampled")]
    UnresamplableTrack,
    /// Fewer than two sample points cannot include both endpoints.
    #[error("resample count must be at least 2, got {0}")]
    BadResampleCount(usize),
    #[error("track must contain at least one detection")]
    EmptyTrack,
    #[error("track frame indices must be strictly increasing")]
    NonIncreasingFrames,
}

/// Frame dimensions in pixels. Both sides are multiples of [`CELL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDims {
    pub w: u32,
    pub h: u32,
}

impl FrameDims {
    pub fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn cols(&self) -> u32 {
        self.w / CELL
    }

    pub fn rows(&self) -> u32 {
        self.h / CELL
    }

    pub fn area(&self) -> f64 {
        f64::from(self.w) * f64::from(self.h)
    }

    pub fn diagonal(&self) -> f64 {
        libm::hypot(f64::from(self.w), f64::from(self.h))
    }

    pub fn full_window(&self) -> WindowSize {
        WindowSize { w: self.w, h: self.h }
    }
}

/// Object category label. The simulator uses a single category by default
/// but everything downstream carries it through.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CategoryId(pub u16);

/// Identity of a track within one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

/// One timestamped bounding box with confidence.
///
/// `(x, y)` is the box center; `w`/`h` its full extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub category: CategoryId,
}

impl Detection {
    pub fn center(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Corner form `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Clip the box so it lies within the frame, preserving area where
    /// possible by shifting rather than shrinking only when it fits.
    pub fn clipped_to(&self, dims: FrameDims) -> Detection {
        let (x0, y0, x1, y1) = self.corners();
        let fw = f64::from(dims.w);
        let fh = f64::from(dims.h);
        let nx0 = x0.max(0.0);
        let ny0 = y0.max(0.0);
        let nx1 = x1.min(fw);
        let ny1 = y1.min(fh);
        let w = (nx1 - nx0).max(1.0);
        let h = (ny1 - ny0).max(1.0);
        Detection {
            x: nx0 + w / 2.0,
            y: ny0 + h / 2.0,
            w,
            h,
            ..*self
        }
    }
}

/// An ordered detection sequence with identity; the unit of query output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub category: CategoryId,
    pub detections: Vec<Detection>,
}

impl Track {
    /// Build a track, enforcing that it is non-empty with strictly
    /// increasing frame indices.
    pub fn new(
        id: TrackId,
        category: CategoryId,
        detections: Vec<Detection>,
    ) -> Result<Self, GeometryError> {
        if detections.is_empty() {
            return Err(GeometryError::EmptyTrack);
        }
        if detections.windows(2).any(|p| p[1].frame <= p[0].frame) {
            return Err(GeometryError::NonIncreasingFrames);
        }
        Ok(Self { id, category, detections })
    }

    pub fn first(&self) -> &Detection {
        &self.detections[0]
    }

    pub fn last(&self) -> &Detection {
        self.detections.last().expect("track is non-empty")
    }

    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.detections.iter().map(Detection::center)
    }
}

/// Per-cell proxy scores over one frame, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub cols: u32,
    pub rows: u32,
    /// Cell side in pixels; fixed at [`CELL`].
    pub cell: u32,
    pub scores: Vec<f64>,
}

impl FrameGrid {
    pub fn zeros(cols: u32, rows: u32) -> Self {
        Self {
            cols,
            rows,
            cell: CELL,
            scores: alloc::vec![0.0; (cols * rows) as usize],
        }
    }

    pub fn score(&self, col: u32, row: u32) -> f64 {
        self.scores[(row * self.cols + col) as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, v: f64) {
        self.scores[(row * self.cols + col) as usize] = v;
    }
}

/// Axis-aligned detector window: top-left corner at multiples of 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn size(&self) -> WindowSize {
        WindowSize { w: self.w, h: self.h }
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= f64::from(self.x)
            && px < f64::from(self.x + self.w)
            && py >= f64::from(self.y)
            && py < f64::from(self.y + self.h)
    }

    /// True iff the box overlaps this rect with positive area.
    pub fn intersects_box(&self, d: &Detection) -> bool {
        let (x0, y0, x1, y1) = d.corners();
        x0 < f64::from(self.x + self.w)
            && x1 > f64::from(self.x)
            && y0 < f64::from(self.y + self.h)
            && y1 > f64::from(self.y)
    }
}

/// Detector input dimensions in pixels, both multiples of 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowSize {
    pub w: u32,
    pub h: u32,
}

impl WindowSize {
    pub fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn contains(&self, w: f64, h: f64) -> bool {
        f64::from(self.w) >= w && f64::from(self.h) >= h
    }
}

/// Intersection over union between two boxes; both valid, result in [0, 1].
pub fn iou(a: &Detection, b: &Detection) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// `n` points evenly spaced by arc length along the polyline of box
/// centers. The first and last points equal the track's first and last
/// centers exactly.
pub fn resample_path(track: &Track, n: usize) -> Result<Vec<(f64, f64)>, GeometryError> {
    if n < 2 {
        return Err(GeometryError::BadResampleCount(n));
    }
    let centers: Vec<(f64, f64)> = track.centers().collect();
    if centers.len() < 2 {
        return Err(GeometryError::UnresamplableTrack);
    }
    resample_points(&centers, n)
}

/// Arc-length resampling of an arbitrary polyline; shared with cluster
/// center handling where there is no surrounding track.
pub fn resample_points(points: &[(f64, f64)], n: usize) -> Result<Vec<(f64, f64)>, GeometryError> {
    if n < 2 {
        return Err(GeometryError::BadResampleCount(n));
    }
    if points.len() < 2 {
        return Err(GeometryError::UnresamplableTrack);
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for pair in points.windows(2) {
        let d = libm::hypot(pair[1].0 - pair[0].0, pair[1].1 - pair[0].1);
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    if total <= 0.0 {
        // Degenerate path: every sample sits on the single location.
        out.extend(core::iter::repeat_n(points[0], n));
        return Ok(out);
    }
    let mut seg = 0usize;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let t = if seg_len > 0.0 { (target - cum[seg]) / seg_len } else { 0.0 };
        let (x0, y0) = points[seg];
        let (x1, y1) = points[seg + 1];
        out.push((x0 + (x1 - x0) * t.clamp(0.0, 1.0), y0 + (y1 - y0) * t.clamp(0.0, 1.0)));
    }
    // Pin the endpoints so accumulated float error never moves them.
    out[0] = points[0];
    out[n - 1] = *points.last().unwrap();
    Ok(out)
}

/// Exactly the cells whose 32x32 pixel region overlaps the box with
/// strictly positive area. Cells outside the grid are ignored.
pub fn cells_intersecting(d: &Detection, cols: u32, rows: u32) -> BTreeSet<CellCoord> {
    let (x0, y0, x1, y1) = d.corners();
    let mut out = BTreeSet::new();
    if x1 <= 0.0 || y1 <= 0.0 {
        return out;
    }
    let cell = f64::from(CELL);
    let c0 = (x0.max(0.0) / cell) as u32;
    let r0 = (y0.max(0.0) / cell) as u32;
    let c1 = ((x1 / cell).min(f64::from(cols)) as u32).min(cols.saturating_sub(1));
    let r1 = ((y1 / cell).min(f64::from(rows)) as u32).min(rows.saturating_sub(1));
    for row in r0..=r1.min(rows.saturating_sub(1)) {
        for col in c0..=c1.min(cols.saturating_sub(1)) {
            let cx0 = f64::from(col * CELL);
            let cy0 = f64::from(row * CELL);
            let cx1 = cx0 + cell;
            let cy1 = cy0 + cell;
            // Strict inequalities: zero-area (edge) contact does not count.
            if x0 < cx1 && x1 > cx0 && y0 < cy1 && y1 > cy0 {
                out.insert((col, row));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection {
            frame: 0,
            x,
            y,
            w,
            h,
            confidence: 1.0,
            category: CategoryId(0),
        }
    }

    fn track_of(centers: &[(f64, f64)]) -> Track {
        let dets = centers
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Detection { frame: i as u32, ..det(x, y, 4.0, 4.0) })
            .collect();
        Track::new(TrackId(0), CategoryId(0), dets).unwrap()
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let a = det(10.0, 10.0, 4.0, 6.0);
        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = det(10.0, 10.0, 4.0, 4.0);
        let b = det(100.0, 100.0, 4.0, 4.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_corner_overlap_is_one_seventh() {
        // Corner boxes (0,0,2,2) and (1,1,2,2): overlap 1, union 4+4-1.
        let a = det(1.0, 1.0, 2.0, 2.0);
        let b = det(2.0, 2.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn resample_straight_segment() {
        let t = track_of(&[(0.0, 0.0), (10.0, 0.0)]);
        let pts = resample_path(&t, 3).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]);
    }

    #[test]
    fn resample_two_points_gives_endpoints() {
        let t = track_of(&[(1.0, 2.0), (3.0, 4.0), (9.0, -1.0)]);
        let pts = resample_path(&t, 2).unwrap();
        assert_eq!(pts, vec![(1.0, 2.0), (9.0, -1.0)]);
    }

    #[test]
    fn resample_right_angle_polyline() {
        // Arc length 8; samples at arc positions 0, 2, 4, 6, 8.
        let t = track_of(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0)]);
        let pts = resample_path(&t, 5).unwrap();
        let expect = [(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (4.0, 2.0), (4.0, 4.0)];
        for (p, e) in pts.iter().zip(expect.iter()) {
            assert!((p.0 - e.0).abs() < 1e-12 && (p.1 - e.1).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_single_detection_errors() {
        let t = Track::new(TrackId(0), CategoryId(0), vec![det(1.0, 1.0, 2.0, 2.0)]).unwrap();
        assert_eq!(resample_path(&t, 5), Err(GeometryError::UnresamplableTrack));
    }

    #[test]
    fn track_rejects_bad_frame_order() {
        let mut a = det(0.0, 0.0, 2.0, 2.0);
        let mut b = a;
        a.frame = 3;
        b.frame = 3;
        assert_eq!(
            Track::new(TrackId(0), CategoryId(0), vec![a, b]).unwrap_err(),
            GeometryError::NonIncreasingFrames
        );
        assert_eq!(
            Track::new(TrackId(0), CategoryId(0), vec![]).unwrap_err(),
            GeometryError::EmptyTrack
        );
    }

    #[test]
    fn cells_box_inside_one_cell() {
        let d = det(16.0, 16.0, 8.0, 8.0);
        let cells = cells_intersecting(&d, 4, 4);
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![(0, 0)]);
    }

    #[test]
    fn cells_box_covering_frame() {
        let d = det(64.0, 64.0, 128.0, 128.0);
        let cells = cells_intersecting(&d, 4, 4);
        assert_eq!(cells.len(), 16);
    }

    #[test]
    fn cells_edge_touch_does_not_count() {
        // Right edge exactly at x=32: no overlap with column 1.
        let d = det(16.0, 16.0, 32.0, 32.0);
        let cells = cells_intersecting(&d, 4, 4);
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![(0, 0)]);
    }

    /// Brute-force per-cell overlap oracle.
    fn cells_oracle(d: &Detection, cols: u32, rows: u32) -> BTreeSet<CellCoord> {
        let (x0, y0, x1, y1) = d.corners();
        let mut out = BTreeSet::new();
        for row in 0..rows {
            for col in 0..cols {
                let cx0 = f64::from(col * CELL);
                let cy0 = f64::from(row * CELL);
                let ow = (x1.min(cx0 + 32.0) - x0.max(cx0)).max(0.0);
                let oh = (y1.min(cy0 + 32.0) - y0.max(cy0)).max(0.0);
                if ow * oh > 0.0 {
                    out.insert((col, row));
                }
            }
        }
        out
    }

    #[test]
    fn cells_forty_px_box_on_128_frame() {
        let d = det(48.0, 48.0, 40.0, 40.0);
        let got = cells_intersecting(&d, 4, 4);
        assert_eq!(got, cells_oracle(&d, 4, 4));
        // Box spans 28..68 on both axes: every cell in 0..=2 overlaps.
        assert_eq!(got.len(), 9);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            ax in 0.0..100.0f64, ay in 0.0..100.0f64,
            aw in 0.1..50.0f64, ah in 0.1..50.0f64,
            bx in 0.0..100.0f64, by in 0.0..100.0f64,
            bw in 0.1..50.0f64, bh in 0.1..50.0f64,
        ) {
            let a = det(ax, ay, aw, ah);
            let b = det(bx, by, bw, bh);
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn resample_matches_arc_walk_oracle(
            pts in proptest::collection::vec((0.0..500.0f64, 0.0..500.0f64), 2..8),
            n in 2usize..30,
        ) {
            let t = track_of(&pts);
            let out = resample_path(&t, n).unwrap();
            prop_assert_eq!(out.len(), n);
            prop_assert_eq!(out[0], pts[0]);
            prop_assert_eq!(out[n - 1], *pts.last().unwrap());

            // Independent oracle: walk the polyline forward for each target
            // arc position, consuming whole segments as needed.
            let seg_len: Vec<f64> = pts.windows(2)
                .map(|p| libm::hypot(p[1].0 - p[0].0, p[1].1 - p[0].1))
                .collect();
            let total: f64 = seg_len.iter().sum();
            for (i, got) in out.iter().enumerate() {
                let mut remaining = total * i as f64 / (n - 1) as f64;
                let mut expect = *pts.last().unwrap();
                for (s, pair) in seg_len.iter().zip(pts.windows(2)) {
                    if remaining <= *s {
                        let t = if *s > 0.0 { remaining / s } else { 0.0 };
                        expect = (
                            pair[0].0 + (pair[1].0 - pair[0].0) * t,
                            pair[0].1 + (pair[1].1 - pair[0].1) * t,
                        );
                        break;
                    }
                    remaining -= s;
                }
                if total <= 0.0 {
                    expect = pts[0];
                }
                prop_assert!(
                    libm::hypot(got.0 - expect.0, got.1 - expect.1) <= 1e-6,
                    "point {} mismatch: {:?} vs {:?}", i, got, expect
                );
            }
        }

        #[test]
        fn cells_matches_bruteforce(
            x in -20.0..200.0f64, y in -20.0..200.0f64,
            w in 0.5..150.0f64, h in 0.5..150.0f64,
        ) {
            let d = det(x, y, w, h);
            prop_assert_eq!(cells_intersecting(&d, 5, 5), cells_oracle(&d, 5, 5));
        }
    }
}
