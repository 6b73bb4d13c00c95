//! Synthetic scene generation.
//!
//! Objects spawn by a Poisson process, follow a parametric path from the
//! scene's path library at a per-object speed factor and lateral lane
//! offset, and despawn at the path end. Spawns that cannot complete their
//! traversal before the clip ends are discarded, so every ground-truth
//! track runs from its path entry to its path exit; pattern counts are
//! then well-defined per clip.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CategoryId, Detection, FrameDims, Track, TrackId, CELL};
use crate::metrics::{pattern_count, CountLabels, SpatialPattern};
use crate::sim::rng::{stream_rng, STREAM_SCENE};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("path library is empty")]
    EmptyPathLibrary,
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

/// One parametric path: waypoints traversed at `speed` pixels per frame.
/// A single-waypoint path is a stationary object that dwells for
/// `hold_frames` frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Spatial pattern this path realizes; unique across the library.
    pub pattern: String,
    pub waypoints: Vec<(f64, f64)>,
    pub speed: f64,
    #[serde(default)]
    pub hold_frames: u32,
}

impl PathSpec {
    pub fn arc_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| libm::hypot(p[1].0 - p[0].0, p[1].1 - p[0].1))
            .sum()
    }

    /// Number of frames an object on this path is visible, at a given
    /// speed factor.
    pub fn lifetime_frames(&self, speed_factor: f64) -> u32 {
        if self.waypoints.len() < 2 {
            return self.hold_frames.max(1);
        }
        let steps = libm::ceil(self.arc_length() / (self.speed * speed_factor)) as u32;
        steps + 1
    }

    /// Point at arc position `s`, clamped to the path extent.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        if self.waypoints.len() == 1 {
            return self.waypoints[0];
        }
        let mut remaining = s.max(0.0);
        for pair in self.waypoints.windows(2) {
            let len = libm::hypot(pair[1].0 - pair[0].0, pair[1].1 - pair[0].1);
            if remaining <= len || len <= 0.0 {
                let t = if len > 0.0 { remaining / len } else { 0.0 };
                return (
                    pair[0].0 + (pair[1].0 - pair[0].0) * t.min(1.0),
                    pair[0].1 + (pair[1].1 - pair[0].1) * t.min(1.0),
                );
            }
            remaining -= len;
        }
        *self.waypoints.last().unwrap()
    }

    /// Unit normal of the segment active at arc position `s`; used for
    /// lateral lane offsets.
    fn normal_at(&self, s: f64) -> (f64, f64) {
        if self.waypoints.len() < 2 {
            return (0.0, 0.0);
        }
        let mut remaining = s.max(0.0);
        for pair in self.waypoints.windows(2) {
            let dx = pair[1].0 - pair[0].0;
            let dy = pair[1].1 - pair[0].1;
            let len = libm::hypot(dx, dy);
            if remaining <= len && len > 0.0 {
                return (-dy / len, dx / len);
            }
            remaining -= len;
        }
        let pair = &self.waypoints[self.waypoints.len() - 2..];
        let dx = pair[1].0 - pair[0].0;
        let dy = pair[1].1 - pair[0].1;
        let len = libm::hypot(dx, dy).max(1e-9);
        (-dy / len, dx / len)
    }
}

/// Full description of a synthetic scene; generation is deterministic in
/// `rng_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frame: FrameDims,
    pub fps: u32,
    /// Frames per clip.
    pub duration: u32,
    pub clip_count: u32,
    /// Expected new objects per second.
    pub object_rate: f64,
    pub paths: Vec<PathSpec>,
    /// Object box side, sampled uniformly per object.
    pub size_min: f64,
    pub size_max: f64,
    /// Relative per-object speed variation (factor in 1 +/- jitter).
    #[serde(default)]
    pub speed_jitter: f64,
    /// Max lateral lane offset in pixels, sampled per object.
    #[serde(default)]
    pub lane_jitter: f64,
    /// Half-width of the square start/end regions of each pattern.
    pub pattern_radius: f64,
    pub category: CategoryId,
    pub rng_seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.paths.is_empty() {
            return Err(SceneError::EmptyPathLibrary);
        }
        let err = |msg: &str| Err(SceneError::InvalidSpec(String::from(msg)));
        if self.frame.w == 0
            || self.frame.h == 0
            || !self.frame.w.is_multiple_of(CELL)
            || !self.frame.h.is_multiple_of(CELL)
        {
            return err("frame dimensions must be positive multiples of 32");
        }
        if self.fps == 0 || self.duration == 0 || self.clip_count == 0 {
            return err("fps, duration and clip_count must be positive");
        }
        // NaN-aware: reversed comparisons would wave NaN through.
        if !self.object_rate.is_finite() || self.object_rate < 0.0 {
            return err("object_rate must be non-negative");
        }
        if !(self.size_min.is_finite() && self.size_min > 0.0 && self.size_max >= self.size_min) {
            return err("object size range must satisfy 0 < min <= max");
        }
        if !(0.0..1.0).contains(&self.speed_jitter) {
            return err("speed_jitter must be in [0, 1)");
        }
        if self.lane_jitter < 0.0 || self.pattern_radius <= 0.0 {
            return err("lane_jitter must be >= 0 and pattern_radius > 0");
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &self.paths {
            if p.waypoints.is_empty() {
                return err("every path needs at least one waypoint");
            }
            if p.waypoints.len() >= 2 && !(p.speed.is_finite() && p.speed > 0.0) {
                return err("multi-waypoint paths need a positive speed");
            }
            if !seen.insert(p.pattern.clone()) {
                return err("pattern ids must be unique across the path library");
            }
            // Worst case lifetime is at the slowest speed factor.
            let slowest = 1.0 - self.speed_jitter;
            if p.lifetime_frames(slowest.max(1e-6)) > self.duration {
                return err("path traversal does not fit within the clip duration");
            }
        }
        Ok(())
    }

    /// Start/end regions derived from each path's first and last waypoint.
    pub fn patterns(&self) -> Vec<SpatialPattern> {
        self.paths
            .iter()
            .map(|p| {
                let first = p.waypoints[0];
                let last = *p.waypoints.last().unwrap();
                SpatialPattern {
                    id: p.pattern.clone(),
                    start: square_region(first, self.pattern_radius),
                    end: square_region(last, self.pattern_radius),
                }
            })
            .collect()
    }
}

fn square_region(center: (f64, f64), half: f64) -> Vec<(f64, f64)> {
    alloc::vec![
        (center.0 - half, center.1 - half),
        (center.0 + half, center.1 - half),
        (center.0 + half, center.1 + half),
        (center.0 - half, center.1 + half),
    ]
}

/// One generated clip: ground-truth tracks, the same detections regrouped
/// per frame, and per-pattern unique-object counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub tracks: Vec<Track>,
    pub frames: Vec<Vec<Detection>>,
    pub counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: SceneSpec,
    pub clips: Vec<Clip>,
}

impl SyntheticDataset {
    pub fn labels(&self) -> CountLabels {
        let mut labels = CountLabels::default();
        for (i, clip) in self.clips.iter().enumerate() {
            labels.clips.insert(i as u32, clip.counts.clone());
        }
        labels
    }

    pub fn tracks_per_clip(&self) -> Vec<Vec<Track>> {
        self.clips.iter().map(|c| c.tracks.clone()).collect()
    }
}

/// Knuth's inverse-transform Poisson sampler; rates here are well below 30
/// per frame so the running product stays far from underflow.
fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = libm::exp(-lambda);
    let mut k = 0u32;
    let mut p = 1.0f64;
    loop {
        p *= rng.random::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

/// Generate one clip; pure in (spec, clip index), so clips can be produced
/// in any order or in parallel with identical results.
pub fn generate_clip(spec: &SceneSpec, clip_index: u32) -> Clip {
    let mut rng = stream_rng(spec.rng_seed, &[STREAM_SCENE, u64::from(clip_index)]);
    let per_frame_rate = spec.object_rate / f64::from(spec.fps);
    let mut tracks: Vec<Track> = Vec::new();
    let mut next_id = 0u64;

    for frame in 0..spec.duration {
        let spawns = poisson(&mut rng, per_frame_rate);
        for _ in 0..spawns {
            // All draws happen before the feasibility check so the stream
            // stays aligned regardless of which spawns are kept.
            let path_idx = rng.random_range(0..spec.paths.len());
            let size = rng.random_range(spec.size_min..=spec.size_max);
            let factor = 1.0 + rng.random_range(-spec.speed_jitter..=spec.speed_jitter);
            let offset = if spec.lane_jitter > 0.0 {
                rng.random_range(-spec.lane_jitter..=spec.lane_jitter)
            } else {
                0.0
            };
            let path = &spec.paths[path_idx];
            let lifetime = path.lifetime_frames(factor);
            if frame + lifetime > spec.duration {
                continue;
            }
            let speed = if path.waypoints.len() >= 2 { path.speed * factor } else { 0.0 };
            let mut detections = Vec::with_capacity(lifetime as usize);
            for step in 0..lifetime {
                let s = speed * f64::from(step);
                let (px, py) = path.point_at(s);
                let (nx, ny) = path.normal_at(s);
                let d = Detection {
                    frame: frame + step,
                    x: px + nx * offset,
                    y: py + ny * offset,
                    w: size,
                    h: size,
                    confidence: 1.0,
                    category: spec.category,
                }
                .clipped_to(spec.frame);
                detections.push(d);
            }
            let track = Track::new(TrackId(next_id), spec.category, detections)
                .expect("generated detections are frame-ordered");
            next_id += 1;
            tracks.push(track);
        }
    }

    let mut frames: Vec<Vec<Detection>> = alloc::vec![Vec::new(); spec.duration as usize];
    for track in &tracks {
        for d in &track.detections {
            frames[d.frame as usize].push(*d);
        }
    }

    let patterns = spec.patterns();
    let counts = patterns
        .iter()
        .map(|p| (p.id.clone(), pattern_count(&tracks, p)))
        .collect();

    Clip { tracks, frames, counts }
}

/// Generate the full dataset for a spec.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticDataset, SceneError> {
    spec.validate()?;
    let clips = (0..spec.clip_count).map(|i| generate_clip(spec, i)).collect();
    Ok(SyntheticDataset { spec: spec.clone(), clips })
}
