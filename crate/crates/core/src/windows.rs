//! Detector window planning from proxy cell scores.
//!
//! Positive cells are grouped by density-based agglomerative clustering into
//! rectangles drawn from a small fixed set of window sizes, chosen ahead of
//! time by a greedy search that minimizes estimated execution time over a
//! training sample. A plan that would cost more than one full-frame pass is
//! replaced by the full-frame rect, so using the proxy is never slower than
//! not using it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, DetectorCost, ProxyLevelId};
use crate::geometry::{
    cells_intersecting, CellCoord, Detection, FrameDims, FrameGrid, Rect, WindowSize, CELL,
};

#[derive(Debug, Error, PartialEq)]
pub enum WindowsError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("window-size selection needs a non-empty training set")]
    EmptyTrainingSet,
    #[error("proxy cache has no grids for level {0:?}")]
    MissingCachedLevel(ProxyLevelId),
    #[error("window-size set must contain the full-frame size")]
    MissingFullFrame,
    #[error("window sizes must be distinct")]
    DuplicateSize,
}

/// The fixed set of detector window sizes; always contains the full frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WindowSizeSetRepr")]
pub struct WindowSizeSet {
    full: WindowSize,
    sizes: Vec<WindowSize>,
}

#[derive(Debug, Clone, Deserialize)]
struct WindowSizeSetRepr {
    full: WindowSize,
    sizes: Vec<WindowSize>,
}

impl TryFrom<WindowSizeSetRepr> for WindowSizeSet {
    type Error = WindowsError;

    fn try_from(r: WindowSizeSetRepr) -> Result<Self, WindowsError> {
        WindowSizeSet::new(r.full, r.sizes)
    }
}

impl WindowSizeSet {
    pub fn new(full: WindowSize, sizes: Vec<WindowSize>) -> Result<Self, WindowsError> {
        if !sizes.contains(&full) {
            return Err(WindowsError::MissingFullFrame);
        }
        let distinct: BTreeSet<_> = sizes.iter().collect();
        if distinct.len() != sizes.len() {
            return Err(WindowsError::DuplicateSize);
        }
        Ok(Self { full, sizes })
    }

    pub fn full_frame_only(dims: FrameDims) -> Self {
        let full = dims.full_window();
        Self { full, sizes: alloc::vec![full] }
    }

    pub fn full(&self) -> WindowSize {
        self.full
    }

    pub fn sizes(&self) -> &[WindowSize] {
        &self.sizes
    }

    fn with_extra(&self, extra: WindowSize) -> Self {
        let mut sizes = self.sizes.clone();
        sizes.push(extra);
        Self { full: self.full, sizes }
    }
}

/// Window plan for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub rects: Vec<Rect>,
    pub covered_cells: BTreeSet<CellCoord>,
}

/// Cells with score strictly above `b_proxy`.
pub fn threshold(grid: &FrameGrid, b_proxy: f64) -> BTreeSet<CellCoord> {
    let mut out = BTreeSet::new();
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            if grid.score(col, row) > b_proxy {
                out.insert((col, row));
            }
        }
    }
    out
}

/// 4-connectivity components; each component's cells are sorted, and the
/// components are ordered by their smallest cell.
pub fn connected_components(cells: &BTreeSet<CellCoord>) -> Vec<Vec<CellCoord>> {
    let mut seen: BTreeSet<CellCoord> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells {
        if seen.contains(&start) {
            continue;
        }
        let mut component = Vec::new();
        let mut stack = alloc::vec![start];
        seen.insert(start);
        while let Some((c, r)) = stack.pop() {
            component.push((c, r));
            let mut push = |cc: CellCoord| {
                if cells.contains(&cc) && seen.insert(cc) {
                    stack.push(cc);
                }
            };
            if c > 0 {
                push((c - 1, r));
            }
            if r > 0 {
                push((c, r - 1));
            }
            push((c + 1, r));
            push((c, r + 1));
        }
        component.sort_unstable();
        out.push(component);
    }
    out
}

/// Total estimated execution time of a rect list.
pub fn est_time(rects: &[Rect], cost: &DetectorCost<'_>) -> Result<f64, CostError> {
    let mut total = 0.0;
    for r in rects {
        total += cost.rect_time(r.size())?;
    }
    Ok(total)
}

/// Minimum-area size in the set that contains a `w x h` pixel bounding box;
/// ties broken toward the smaller width. The full-frame size always
/// qualifies, so this cannot fail for in-frame boxes.
pub fn smallest_window_for(bbox_w: f64, bbox_h: f64, sizes: &WindowSizeSet) -> WindowSize {
    sizes
        .sizes()
        .iter()
        .copied()
        .filter(|s| s.contains(bbox_w, bbox_h))
        .min_by(|a, b| a.area().cmp(&b.area()).then(a.w.cmp(&b.w)))
        .unwrap_or(sizes.full())
}

#[derive(Debug, Clone)]
struct Cluster {
    cells: Vec<CellCoord>,
    min_c: u32,
    max_c: u32,
    min_r: u32,
    max_r: u32,
    sum_c: u64,
    sum_r: u64,
}

impl Cluster {
    fn from_cells(cells: Vec<CellCoord>) -> Self {
        let mut it = Self {
            cells,
            min_c: u32::MAX,
            max_c: 0,
            min_r: u32::MAX,
            max_r: 0,
            sum_c: 0,
            sum_r: 0,
        };
        for &(c, r) in &it.cells {
            it.min_c = it.min_c.min(c);
            it.max_c = it.max_c.max(c);
            it.min_r = it.min_r.min(r);
            it.max_r = it.max_r.max(r);
            it.sum_c += u64::from(c);
            it.sum_r += u64::from(r);
        }
        it
    }

    fn centroid(&self) -> (f64, f64) {
        let n = self.cells.len() as f64;
        (self.sum_c as f64 / n, self.sum_r as f64 / n)
    }

    fn bbox_px(&self) -> (f64, f64) {
        (
            f64::from((self.max_c - self.min_c + 1) * CELL),
            f64::from((self.max_r - self.min_r + 1) * CELL),
        )
    }

    fn merged(&self, other: &Cluster) -> Cluster {
        Cluster {
            cells: Vec::new(), // cells are re-collected only when accepted
            min_c: self.min_c.min(other.min_c),
            max_c: self.max_c.max(other.max_c),
            min_r: self.min_r.min(other.min_r),
            max_r: self.max_r.max(other.max_r),
            sum_c: self.sum_c + other.sum_c,
            sum_r: self.sum_r + other.sum_r,
        }
    }

    fn window(&self, sizes: &WindowSizeSet) -> WindowSize {
        let (w, h) = self.bbox_px();
        smallest_window_for(w, h, sizes)
    }
}

fn centroid_distance(a: &Cluster, b: &Cluster) -> f64 {
    let (ax, ay) = a.centroid();
    let (bx, by) = b.centroid();
    libm::hypot(ax - bx, ay - by)
}

/// Place a window of `size` centered on the cluster bounding box, snapped
/// to cell boundaries and clamped into the frame.
fn place_rect(cluster: &Cluster, size: WindowSize, dims: FrameDims) -> Rect {
    let w_cells = size.w / CELL;
    let h_cells = size.h / CELL;
    let span_c = cluster.max_c - cluster.min_c + 1;
    let span_r = cluster.max_r - cluster.min_r + 1;
    let x_cell = cluster
        .min_c
        .saturating_sub((w_cells - span_c) / 2)
        .min(dims.cols().saturating_sub(w_cells));
    let y_cell = cluster
        .min_r
        .saturating_sub((h_cells - span_r) / 2)
        .min(dims.rows().saturating_sub(h_cells));
    Rect { x: x_cell * CELL, y: y_cell * CELL, w: size.w, h: size.h }
}

/// Group positive cells into detector windows.
///
/// One cluster per connected component, then repeated passes: each cluster
/// proposes a merge with its nearest neighbor (centroid distance in cell
/// coordinates, lower index on ties), absorbs every other cluster that fits
/// the proposal's window without enlarging it, and the merge is accepted iff
/// the merged window is strictly cheaper than the absorbed clusters'
/// individual windows. Passes repeat until none merges. If the final plan
/// costs more than one full-frame pass it is replaced by the full frame.
pub fn group_cells(
    cells: &BTreeSet<CellCoord>,
    sizes: &WindowSizeSet,
    cost: &DetectorCost<'_>,
    dims: FrameDims,
) -> Result<WindowPlan, CostError> {
    let mut clusters: Vec<Cluster> = connected_components(cells)
        .into_iter()
        .map(Cluster::from_cells)
        .collect();

    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i < clusters.len() {
            if clusters.len() < 2 {
                break;
            }
            let nearest = (0..clusters.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    centroid_distance(&clusters[i], &clusters[a])
                        .total_cmp(&centroid_distance(&clusters[i], &clusters[b]))
                        .then(a.cmp(&b))
                })
                .expect("at least two clusters");

            let mut proposal = clusters[i].merged(&clusters[nearest]);
            let window = proposal.window(sizes);
            let mut absorbed = alloc::vec![i, nearest];
            #[allow(clippy::needless_range_loop)] // ascending-id order is part of the contract
            for k in 0..clusters.len() {
                if absorbed.contains(&k) {
                    continue;
                }
                let candidate = proposal.merged(&clusters[k]);
                if candidate.window(sizes) == window {
                    proposal = candidate;
                    absorbed.push(k);
                }
            }

            let merged_time = cost.rect_time(window)?;
            let mut individual_time = 0.0;
            for &k in &absorbed {
                individual_time += cost.rect_time(clusters[k].window(sizes))?;
            }

            if merged_time < individual_time {
                let mut cells_union = Vec::new();
                absorbed.sort_unstable();
                for &k in absorbed.iter().rev() {
                    cells_union.append(&mut clusters[k].cells);
                    clusters.remove(k);
                }
                cells_union.sort_unstable();
                clusters.insert(i.min(clusters.len()), Cluster::from_cells(cells_union));
                merged_any = true;
            }
            i += 1;
        }
        if !merged_any {
            break;
        }
    }

    let mut rects: Vec<Rect> = clusters
        .iter()
        .map(|c| place_rect(c, c.window(sizes), dims))
        .collect();

    if !rects.is_empty() {
        let full_time = cost.rect_time(sizes.full())?;
        if est_time(&rects, cost)? > full_time {
            rects = alloc::vec![Rect { x: 0, y: 0, w: sizes.full().w, h: sizes.full().h }];
        }
    }

    Ok(WindowPlan { rects, covered_cells: cells.clone() })
}

/// Greedy selection of the fixed window-size set.
///
/// Starting from the full frame, each round adds the candidate size (every
/// multiple of 32 up to the frame, smaller area then smaller width on ties)
/// that minimizes the summed plan time over the training frames' positive
/// cells, stopping at cardinality `k`. At most `max_frames` frames are used,
/// sampled evenly across the input.
pub fn select_window_sizes(
    training_frames: &[Vec<Detection>],
    k: usize,
    cost: &DetectorCost<'_>,
    dims: FrameDims,
    max_frames: usize,
) -> Result<WindowSizeSet, WindowsError> {
    if training_frames.is_empty() || k == 0 {
        return Err(WindowsError::EmptyTrainingSet);
    }
    let n = training_frames.len();
    let take = max_frames.clamp(1, n);
    let cell_sets: Vec<BTreeSet<CellCoord>> = (0..take)
        .map(|i| {
            let frame = &training_frames[i * n / take];
            let mut cells = BTreeSet::new();
            for d in frame {
                cells.extend(cells_intersecting(d, dims.cols(), dims.rows()));
            }
            cells
        })
        .filter(|cells| !cells.is_empty())
        .collect();

    let tot_time = |set: &WindowSizeSet| -> Result<f64, CostError> {
        let mut total = 0.0;
        for cells in &cell_sets {
            let plan = group_cells(cells, set, cost, dims)?;
            total += est_time(&plan.rects, cost)?;
        }
        Ok(total)
    };

    let mut candidates: Vec<WindowSize> = Vec::new();
    let mut w = CELL;
    while w <= dims.w {
        let mut h = CELL;
        while h <= dims.h {
            candidates.push(WindowSize::new(w, h));
            h += CELL;
        }
        w += CELL;
    }
    candidates.sort_by(|a, b| a.area().cmp(&b.area()).then(a.w.cmp(&b.w)));

    let mut set = WindowSizeSet::full_frame_only(dims);
    while set.sizes().len() < k {
        let mut best: Option<(f64, WindowSize)> = None;
        for &candidate in &candidates {
            if set.sizes().contains(&candidate) {
                continue;
            }
            let t = tot_time(&set.with_extra(candidate))?;
            // Candidates are pre-sorted by the tie-break, so strict
            // improvement keeps the earliest minimizer.
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, candidate));
            }
        }
        match best {
            Some((_, size)) => set = set.with_extra(size),
            None => break,
        }
    }
    Ok(set)
}

/// Raw per-frame material cached for proxy parameter search: proxy grids
/// per level and the reference detections, in the same flattened frame
/// order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyFrameCache {
    pub grids: BTreeMap<ProxyLevelId, Vec<FrameGrid>>,
    pub detections: Vec<Vec<Detection>>,
}

/// Recall and runtime of one (level, threshold) proxy setting, plus the
/// plan's window-size histogram so runtime can be re-priced under a
/// different detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPlanStats {
    pub recall: f64,
    pub runtime: f64,
    pub covered: u64,
    pub total: u64,
    pub frames: u64,
    #[serde(with = "rect_count_entries")]
    pub rect_counts: BTreeMap<WindowSize, u64>,
}

/// JSON maps need string keys; the histogram serializes as an entry list.
mod rect_count_entries {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        w: u32,
        h: u32,
        count: u64,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<WindowSize, u64>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(map.len()))?;
        for (size, count) in map {
            seq.serialize_element(&Entry { w: size.w, h: size.h, count: *count })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<WindowSize, u64>, D::Error> {
        let entries = alloc::vec::Vec::<Entry>::deserialize(de)?;
        Ok(entries
            .into_iter()
            .map(|e| (WindowSize::new(e.w, e.h), e.count))
            .collect())
    }
}

/// Evaluate proxy recall and estimated runtime at one (level, threshold)
/// from cached grids and reference detections.
///
/// Recall is the fraction of reference detections whose box intersects a
/// planned rect; runtime is the per-frame proxy cost plus the planned
/// windows' detector cost, summed over the cached frames.
pub fn recall_runtime(
    cache: &ProxyFrameCache,
    level: ProxyLevelId,
    b_proxy: f64,
    sizes: &WindowSizeSet,
    cost: &DetectorCost<'_>,
    dims: FrameDims,
) -> Result<ProxyPlanStats, WindowsError> {
    let grids = cache
        .grids
        .get(&level)
        .ok_or(WindowsError::MissingCachedLevel(level))?;
    let proxy_time = cost.model().proxy_time(level)?;
    let mut stats = ProxyPlanStats {
        recall: 1.0,
        runtime: 0.0,
        covered: 0,
        total: 0,
        frames: grids.len() as u64,
        rect_counts: BTreeMap::new(),
    };
    for (grid, dets) in grids.iter().zip(cache.detections.iter()) {
        let cells = threshold(grid, b_proxy);
        let plan = group_cells(&cells, sizes, cost, dims)?;
        stats.runtime += proxy_time + est_time(&plan.rects, cost)?;
        for r in &plan.rects {
            *stats.rect_counts.entry(r.size()).or_insert(0) += 1;
        }
        for d in dets {
            stats.total += 1;
            if plan.rects.iter().any(|r| r.intersects_box(d)) {
                stats.covered += 1;
            }
        }
    }
    if stats.total > 0 {
        stats.recall = stats.covered as f64 / stats.total as f64;
    }
    Ok(stats)
}
