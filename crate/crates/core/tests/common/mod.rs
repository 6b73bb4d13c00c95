//! Shared scene builders and metrics for integration and acceptance tests.

#![allow(dead_code)]

use trackpipe_core::geometry::{iou, CategoryId, FrameDims, Track};
use trackpipe_core::metrics::MetricsError;
use trackpipe_core::pipeline::PipelineError;
use trackpipe_core::sim::{PathSpec, SceneSpec};
use trackpipe_core::tracker::TrackerError;
use trackpipe_core::tuner::TunerError;

/// Junction-like scene: two crossing roads plus a turning path, leaving
/// most of the frame idle so window planning has savings to find.
pub fn mixed_spec(seed: u64, clip_count: u32) -> SceneSpec {
    SceneSpec {
        frame: FrameDims::new(640, 384),
        fps: 10,
        duration: 160,
        clip_count,
        object_rate: 0.6,
        paths: vec![
            PathSpec {
                pattern: "west-east".into(),
                waypoints: vec![(16.0, 120.0), (624.0, 120.0)],
                speed: 8.0,
                hold_frames: 0,
            },
            PathSpec {
                pattern: "east-west".into(),
                waypoints: vec![(624.0, 180.0), (16.0, 180.0)],
                speed: 8.0,
                hold_frames: 0,
            },
            PathSpec {
                pattern: "south-west".into(),
                waypoints: vec![(480.0, 368.0), (480.0, 150.0), (16.0, 150.0)],
                speed: 9.0,
                hold_frames: 0,
            },
        ],
        size_min: 28.0,
        size_max: 44.0,
        speed_jitter: 0.1,
        lane_jitter: 5.0,
        pattern_radius: 48.0,
        category: CategoryId(0),
        rng_seed: seed,
    }
}

/// Well-separated parallel lanes: no crossings, generous spacing.
pub fn lanes_spec(seed: u64, clip_count: u32) -> SceneSpec {
    SceneSpec {
        frame: FrameDims::new(640, 384),
        fps: 10,
        duration: 160,
        clip_count,
        object_rate: 0.45,
        paths: vec![
            PathSpec {
                pattern: "lane-a".into(),
                waypoints: vec![(16.0, 70.0), (624.0, 70.0)],
                speed: 6.0,
                hold_frames: 0,
            },
            PathSpec {
                pattern: "lane-b".into(),
                waypoints: vec![(624.0, 190.0), (16.0, 190.0)],
                speed: 7.0,
                hold_frames: 0,
            },
            PathSpec {
                pattern: "lane-c".into(),
                waypoints: vec![(16.0, 310.0), (624.0, 310.0)],
                speed: 5.0,
                hold_frames: 0,
            },
        ],
        size_min: 28.0,
        size_max: 40.0,
        speed_jitter: 0.08,
        lane_jitter: 4.0,
        pattern_radius: 48.0,
        category: CategoryId(0),
        rng_seed: seed,
    }
}

/// Fraction of ground-truth tracks recovered as exactly one output track.
///
/// Each output track is assigned to the ground-truth track owning the
/// majority of its detections (same frame, IoU above threshold); a
/// ground-truth track counts as recovered iff exactly one output track is
/// assigned to it.
pub fn identity_consistency(gt: &[Track], out: &[Track], iou_floor: f64) -> f64 {
    if gt.is_empty() {
        return 1.0;
    }
    let mut assigned = vec![0usize; gt.len()];
    for track in out {
        let mut votes = vec![0usize; gt.len()];
        for d in &track.detections {
            for (gi, g) in gt.iter().enumerate() {
                if g.detections
                    .iter()
                    .any(|gd| gd.frame == d.frame && iou(gd, d) >= iou_floor)
                {
                    votes[gi] += 1;
                }
            }
        }
        let (best, best_votes) =
            votes.iter().enumerate().max_by_key(|(_, v)| **v).unwrap();
        if *best_votes * 2 > track.detections.len() {
            assigned[best] += 1;
        }
    }
    assigned.iter().filter(|&&n| n == 1).count() as f64 / gt.len() as f64
}

/// Error umbrella for tests that mix pipeline, tuner and metrics calls.
#[derive(Debug)]
pub enum FlowError {
    Pipeline(PipelineError),
    Tuner(TunerError),
    Tracker(TrackerError),
}

impl From<PipelineError> for FlowError {
    fn from(e: PipelineError) -> Self {
        FlowError::Pipeline(e)
    }
}

impl From<TunerError> for FlowError {
    fn from(e: TunerError) -> Self {
        FlowError::Tuner(e)
    }
}

impl From<TrackerError> for FlowError {
    fn from(e: TrackerError) -> Self {
        FlowError::Tracker(e)
    }
}

impl From<MetricsError> for FlowError {
    fn from(e: MetricsError) -> Self {
        FlowError::Pipeline(PipelineError::Metrics(e))
    }
}

impl From<trackpipe_core::windows::WindowsError> for FlowError {
    fn from(e: trackpipe_core::windows::WindowsError) -> Self {
        FlowError::Pipeline(PipelineError::Windows(e))
    }
}
