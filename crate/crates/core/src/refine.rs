//! Track endpoint refinement from clustered full-rate reference tracks.
//!
//! Reference tracks are clustered with DBSCAN under a resampled-path
//! distance, each cluster is summarized by the pointwise mean of its
//! members' resampled paths, and a spatial grid index over those center
//! paths answers "which clusters pass near this point". A low-rate track
//! is extended by the member-count-weighted median of the nearby clusters'
//! start/end coordinates.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{resample_path, Detection, FrameDims, GeometryError, Track};

/// Evenly spaced points used to compare and summarize paths.
pub const RESAMPLE_POINTS: usize = 20;
/// Cluster centers counted toward refinement, weighted by member count.
pub const DEFAULT_K_NEIGHBORS: u64 = 10;
/// Index cell size in pixels; "passes close" means within one cell.
pub const DEFAULT_INDEX_CELL: f64 = 32.0;
/// Default DBSCAN density requirement (a point counts itself).
pub const DEFAULT_MIN_PTS: usize = 2;

/// Default DBSCAN radius: 5% of the frame diagonal.
pub fn default_eps(dims: FrameDims) -> f64 {
    0.05 * dims.diagonal()
}

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("eps must be positive")]
    BadEps,
}

/// Mean Euclidean distance between corresponding resampled points.
pub fn track_distance(a: &Track, b: &Track) -> Result<f64, RefineError> {
    let pa = resample_path(a, RESAMPLE_POINTS)?;
    let pb = resample_path(b, RESAMPLE_POINTS)?;
    Ok(mean_point_distance(&pa, &pb))
}

pub fn mean_point_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| libm::hypot(p.0 - q.0, p.1 - q.1))
        .sum::<f64>()
        / n
}

/// DBSCAN partition of the input indices. Noise tracks are still usable
/// refinement references, so they appear as singleton clusters and are
/// additionally listed in `noise`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DbscanResult {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Standard DBSCAN over [`track_distance`]; `min_pts` counts the point
/// itself. Tracks must be resamplable (at least two detections).
pub fn dbscan(tracks: &[Track], eps: f64, min_pts: usize) -> Result<DbscanResult, RefineError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(RefineError::BadEps);
    }
    let n = tracks.len();
    let paths: Result<Vec<_>, _> =
        tracks.iter().map(|t| resample_path(t, RESAMPLE_POINTS)).collect();
    let paths = paths?;

    let mut neighbors: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if mean_point_distance(&paths[i], &paths[j]) <= eps {
                neighbors[i].push(j);
            }
        }
    }

    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = alloc::vec![UNVISITED; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for start in 0..n {
        if label[start] != UNVISITED {
            continue;
        }
        if neighbors[start].len() < min_pts {
            label[start] = NOISE;
            continue;
        }
        let id = clusters.len();
        clusters.push(Vec::new());
        label[start] = id;
        let mut queue = alloc::vec![start];
        while let Some(p) = queue.pop() {
            clusters[id].push(p);
            if neighbors[p].len() < min_pts {
                continue; // border point: joins but does not expand
            }
            for &q in &neighbors[p] {
                if label[q] == UNVISITED || label[q] == NOISE {
                    label[q] = id;
                    queue.push(q);
                }
            }
        }
        clusters[id].sort_unstable();
    }

    let mut out = DbscanResult { clusters, noise: Vec::new() };
    for (i, &l) in label.iter().enumerate() {
        if l == NOISE {
            out.noise.push(i);
            out.clusters.push(alloc::vec![i]);
        }
    }
    Ok(out)
}

/// Pointwise mean of the members' resampled paths.
pub fn cluster_center(member_paths: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    assert!(!member_paths.is_empty(), "cluster must be non-empty");
    let n = member_paths[0].len();
    let count = member_paths.len() as f64;
    (0..n)
        .map(|i| {
            let (sx, sy) = member_paths
                .iter()
                .fold((0.0, 0.0), |acc, p| (acc.0 + p[i].0, acc.1 + p[i].1));
            (sx / count, sy / count)
        })
        .collect()
}

/// One reference cluster: member count plus the mean path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackCluster {
    pub size: u64,
    pub center: Vec<(f64, f64)>,
}

/// Cluster reference tracks and summarize each cluster. Tracks too short
/// to resample are skipped; the second return value lists the skipped
/// indices.
pub fn build_clusters(
    tracks: &[Track],
    eps: f64,
    min_pts: usize,
) -> Result<(Vec<TrackCluster>, Vec<usize>), RefineError> {
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        if t.detections.len() >= 2 {
            usable.push(i);
        } else {
            skipped.push(i);
        }
    }
    let selected: Vec<Track> = usable.iter().map(|&i| tracks[i].clone()).collect();
    if selected.is_empty() {
        return Ok((Vec::new(), skipped));
    }
    let result = dbscan(&selected, eps, min_pts)?;
    let mut clusters = Vec::with_capacity(result.clusters.len());
    for members in &result.clusters {
        let paths: Result<Vec<_>, _> = members
            .iter()
            .map(|&i| resample_path(&selected[i], RESAMPLE_POINTS))
            .collect();
        clusters.push(TrackCluster {
            size: members.len() as u64,
            center: cluster_center(&paths?),
        });
    }
    Ok((clusters, skipped))
}

/// Spatial grid over cluster center paths: cell -> cluster ids crossing it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathGridIndex {
    pub cell: f64,
    pub cells: BTreeMap<(i64, i64), Vec<usize>>,
}

impl PathGridIndex {
    pub fn build(clusters: &[TrackCluster], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (id, cluster) in clusters.iter().enumerate() {
            let mut touched: alloc::collections::BTreeSet<(i64, i64)> =
                alloc::collections::BTreeSet::new();
            if cluster.center.len() == 1 {
                touched.insert(Self::cell_of(cluster.center[0], cell));
            }
            for seg in cluster.center.windows(2) {
                Self::cells_on_segment(seg[0], seg[1], cell, &mut touched);
            }
            for c in touched {
                cells.entry(c).or_default().push(id);
            }
        }
        Self { cell, cells }
    }

    fn cell_of(p: (f64, f64), cell: f64) -> (i64, i64) {
        (libm::floor(p.0 / cell) as i64, libm::floor(p.1 / cell) as i64)
    }

    /// Every cell the segment crosses, by exact segment/cell-rect overlap
    /// over the segment's cell bounding box.
    fn cells_on_segment(
        a: (f64, f64),
        b: (f64, f64),
        cell: f64,
        out: &mut alloc::collections::BTreeSet<(i64, i64)>,
    ) {
        let (ca, ra) = Self::cell_of(a, cell);
        let (cb, rb) = Self::cell_of(b, cell);
        for cy in ra.min(rb)..=ra.max(rb) {
            for cx in ca.min(cb)..=ca.max(cb) {
                let x0 = cx as f64 * cell;
                let y0 = cy as f64 * cell;
                if segment_intersects_rect(a, b, (x0, y0), (x0 + cell, y0 + cell)) {
                    out.insert((cx, cy));
                }
            }
        }
    }

    /// Cluster ids passing within one cell of `p` (3x3 neighborhood).
    pub fn near(&self, p: (f64, f64)) -> Vec<usize> {
        let (cx, cy) = Self::cell_of(p, self.cell);
        let mut out: Vec<usize> = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Liang-Barsky style clip test: does the segment intersect the rect
/// (boundary contact counts)?
fn segment_intersects_rect(a: (f64, f64), b: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let checks = [
        (-dx, a.0 - lo.0),
        (dx, hi.0 - a.0),
        (-dy, a.1 - lo.1),
        (dy, hi.1 - a.1),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return false;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return false;
                }
                t1 = t1.min(r);
            }
        }
    }
    t0 <= t1
}

/// Lower-middle weighted median: smallest value whose cumulative weight
/// reaches half the total (rounded up).
fn weighted_median(mut values: Vec<(f64, u64)>) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: u64 = values.iter().map(|v| v.1).sum();
    let threshold = total.div_ceil(2);
    let mut cumulative = 0u64;
    for (v, w) in &values {
        cumulative += w;
        if cumulative >= threshold {
            return *v;
        }
    }
    values.last().unwrap().0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefineStatus {
    Refined { prepended: bool, appended: bool },
    /// No cluster center passes near either endpoint; track unchanged.
    NoCandidates,
    /// Single-detection track cannot be refined; unchanged.
    Unrefinable,
}

/// Extend a low-rate track to the estimated true start and end.
///
/// Candidate clusters pass within one index cell of the track's first or
/// last detection; the closest by path distance are kept until their
/// member counts sum to `k`; the synthetic endpoints sit at the weighted
/// median of the kept clusters' start/end coordinates, with timestamps
/// extrapolated at the track's boundary velocity and clamped to the clip.
pub fn refine(
    track: &Track,
    index: &PathGridIndex,
    clusters: &[TrackCluster],
    k: u64,
    clip_len: u32,
) -> (Track, RefineStatus) {
    if track.detections.len() < 2 {
        return (track.clone(), RefineStatus::Unrefinable);
    }
    let first = *track.first();
    let last = *track.last();

    let mut candidate_ids = index.near(first.center());
    candidate_ids.extend(index.near(last.center()));
    candidate_ids.sort_unstable();
    candidate_ids.dedup();
    if candidate_ids.is_empty() {
        return (track.clone(), RefineStatus::NoCandidates);
    }

    let own_path = resample_path(track, RESAMPLE_POINTS).expect("len checked above");
    let mut ranked: Vec<(f64, usize)> = candidate_ids
        .into_iter()
        .map(|id| (mean_point_distance(&own_path, &clusters[id].center), id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut kept: Vec<usize> = Vec::new();
    let mut weight = 0u64;
    for (_, id) in &ranked {
        kept.push(*id);
        weight += clusters[*id].size;
        if weight >= k {
            break;
        }
    }

    let median_of = |pick: fn(&TrackCluster) -> (f64, f64)| -> (f64, f64) {
        let xs = kept.iter().map(|&id| (pick(&clusters[id]).0, clusters[id].size)).collect();
        let ys = kept.iter().map(|&id| (pick(&clusters[id]).1, clusters[id].size)).collect();
        (weighted_median(xs), weighted_median(ys))
    };
    let new_start = median_of(|c| c.center[0]);
    let new_end = median_of(|c| *c.center.last().unwrap());

    let mut detections = track.detections.clone();
    let mut prepended = false;
    let mut appended = false;

    // Start side: extrapolate backward at the entry velocity.
    if first.frame > 0 {
        let d1 = track.detections[1];
        let step_px = libm::hypot(d1.x - first.x, d1.y - first.y);
        let step_frames = f64::from(d1.frame - first.frame);
        let speed = step_px / step_frames;
        let dist = libm::hypot(new_start.0 - first.x, new_start.1 - first.y);
        let dt = back_frames(dist, speed);
        let frame = first.frame.saturating_sub(dt);
        detections.insert(0, Detection { frame, x: new_start.0, y: new_start.1, ..first });
        prepended = true;
    }
    if last.frame + 1 < clip_len {
        let n = track.detections.len();
        let d_prev = track.detections[n - 2];
        let step_px = libm::hypot(last.x - d_prev.x, last.y - d_prev.y);
        let step_frames = f64::from(last.frame - d_prev.frame);
        let speed = step_px / step_frames;
        let dist = libm::hypot(new_end.0 - last.x, new_end.1 - last.y);
        let dt = back_frames(dist, speed);
        let frame = (last.frame + dt).min(clip_len - 1);
        detections.push(Detection { frame, x: new_end.0, y: new_end.1, ..last });
        appended = true;
    }

    let refined = Track::new(track.id, track.category, detections)
        .expect("extension preserves frame ordering");
    (refined, RefineStatus::Refined { prepended, appended })
}

/// Frames needed to cover `dist` at `speed` px/frame; at least one so the
/// synthetic detection never collides with an existing frame index.
fn back_frames(dist: f64, speed: f64) -> u32 {
    if speed > 1e-9 {
        (libm::round(dist / speed) as u32).max(1)
    } else {
        1
    }
}
