//! Simulated detector and segmentation proxy.
//!
//! Stand-ins for the neural models: detection quality degrades with the
//! effective object size at the configured input resolution, and proxy
//! scores are ground-truth cell labels corrupted by resolution-dependent
//! flip noise plus a continuous grade so thresholds have real granularity.
//!
//! Noise draws are consumed in a fixed per-object (or per-cell) order
//! independent of window coverage, so the same (seed, clip, frame, config)
//! always observes the same noise.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{ArchId, CostError, DetectorCost, ProxyLevelId};
use crate::geometry::{cells_intersecting, Detection, FrameDims, FrameGrid, Rect, WindowSize};

/// Detector noise as a function of effective object size (object pixels
/// scaled by the input resolution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Effective size at which the miss probability is 0.5.
    pub miss_midpoint: f64,
    /// Logistic steepness per effective pixel; 0 disables missing.
    pub miss_steepness: f64,
    /// Center jitter half-range in pixels at native scale; grows as the
    /// resolution shrinks.
    pub jitter_base: f64,
    /// Duplicate-emission probability at native scale; shrinks with the
    /// resolution share, so high resolutions over-count more.
    pub dup_rate: f64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self { miss_midpoint: 0.0, miss_steepness: 0.0, jitter_base: 0.0, dup_rate: 0.0 }
    }

    pub fn miss_prob(&self, effective_size: f64) -> f64 {
        if self.miss_steepness <= 0.0 {
            return 0.0;
        }
        1.0 / (1.0 + libm::exp(self.miss_steepness * (effective_size - self.miss_midpoint)))
    }
}

/// One detector architecture at one input resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDetector {
    pub arch: ArchId,
    pub resolution: WindowSize,
    pub noise: NoiseModel,
}

impl SimulatedDetector {
    /// Linear scale factor between native pixels and detector pixels.
    pub fn effective_scale(&self, native: FrameDims) -> f64 {
        libm::sqrt(self.resolution.area() as f64 / native.area())
    }
}

/// Simulated detector pass over one frame.
///
/// Returns ground-truth boxes whose centers fall inside some rect, each
/// independently dropped with the size-dependent miss probability, jittered,
/// and optionally duplicated; plus the summed window execution time. Boxes
/// below `confidence_threshold` are suppressed.
pub fn detect<R: Rng>(
    gt_frame: &[Detection],
    rects: &[Rect],
    detector: &SimulatedDetector,
    cost: &DetectorCost<'_>,
    native: FrameDims,
    confidence_threshold: f64,
    rng: &mut R,
) -> Result<(Vec<Detection>, f64), CostError> {
    let mut time = 0.0;
    for r in rects {
        time += cost.rect_time(r.size())?;
    }
    let scale = detector.effective_scale(native);
    let mut out = Vec::new();
    for gt in gt_frame {
        // Fixed seven draws per ground-truth box, consumed unconditionally.
        let u_miss: f64 = rng.random();
        let jx: f64 = rng.random_range(-1.0..=1.0);
        let jy: f64 = rng.random_range(-1.0..=1.0);
        let u_dup: f64 = rng.random();
        let dx: f64 = rng.random_range(-1.0..=1.0);
        let dy: f64 = rng.random_range(-1.0..=1.0);
        let dup_scale: f64 = rng.random_range(1.05..=1.3);

        if !rects.iter().any(|r| r.contains_point(gt.x, gt.y)) {
            continue;
        }
        let effective_size = libm::sqrt(gt.area()) * scale;
        let miss = detector.noise.miss_prob(effective_size);
        if u_miss < miss {
            continue;
        }
        let confidence = 1.0 - miss;
        let sigma = if scale > 0.0 { detector.noise.jitter_base / scale } else { 0.0 };
        if confidence >= confidence_threshold {
            let d = Detection {
                x: gt.x + jx * sigma,
                y: gt.y + jy * sigma,
                confidence,
                ..*gt
            }
            .clipped_to(native);
            out.push(d);
        }
        // Spurious near-duplicate with its own inflated size, most common
        // at high resolutions.
        let dup_prob = detector.noise.dup_rate * scale * scale;
        let dup_confidence = 0.5 * confidence;
        if u_dup < dup_prob && dup_confidence >= confidence_threshold {
            let d = Detection {
                x: gt.x + dx * 0.4 * gt.w,
                y: gt.y + dy * 0.4 * gt.h,
                w: gt.w * dup_scale,
                h: gt.h * dup_scale,
                confidence: dup_confidence,
                ..*gt
            }
            .clipped_to(native);
            out.push(d);
        }
    }
    Ok((out, time))
}

/// One trained proxy resolution level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyLevel {
    pub id: ProxyLevelId,
    /// Probability that a cell's binary label is flipped.
    pub flip: f64,
    /// Score spread around the (possibly flipped) label; 0 gives exact 0/1
    /// scores, larger values blur scores toward 0.5.
    pub grade: f64,
}

impl ProxyLevel {
    pub fn noiseless(id: ProxyLevelId) -> Self {
        Self { id, flip: 0.0, grade: 0.0 }
    }
}

/// Simulated segmentation proxy over one frame: ground-truth cell labels
/// with flip noise and graded scores. Two draws per cell in row-major order.
pub fn proxy_scores<R: Rng>(
    gt_frame: &[Detection],
    dims: FrameDims,
    level: &ProxyLevel,
    rng: &mut R,
) -> FrameGrid {
    let cols = dims.cols();
    let rows = dims.rows();
    let mut grid = FrameGrid::zeros(cols, rows);
    let mut labels = alloc::vec![false; (cols * rows) as usize];
    for d in gt_frame {
        for (col, row) in cells_intersecting(d, cols, rows) {
            labels[(row * cols + col) as usize] = true;
        }
    }
    for row in 0..rows {
        for col in 0..cols {
            let u_flip: f64 = rng.random();
            let u_grade: f64 = rng.random();
            let idx = (row * cols + col) as usize;
            let mut label = labels[idx];
            if u_flip < level.flip {
                label = !label;
            }
            let score = if label {
                1.0 - level.grade * u_grade
            } else {
                level.grade * u_grade
            };
            grid.set(col, row, score);
        }
    }
    grid
}
