//! Reduced-rate multi-object tracking.
//!
//! Active track prefixes are matched to each sampled frame's detections
//! either by the trained logistic scorer through Hungarian assignment, or
//! by a heuristic overlap tracker (greedy IoU on velocity-extrapolated
//! boxes) used before any scorer exists. Prefixes store the elapsed frames
//! between their detections, which is what keeps matching meaningful when
//! frames are sampled at a gap.

pub mod assignment;
pub mod scorer;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assignment::{hungarian, Matching, ScoreMatrix};
pub use scorer::{
    extract_features, fit_logistic, logistic_gradient, logistic_loss, sample_training_examples,
    subsample_min_gap, train_scorer, FeatureVector, LogisticScorer, MatchScorer, TrainOptions,
    TrainedScorer, TrainingError, TrainingExample, FEATURE_COUNT,
};

use crate::geometry::{iou, CategoryId, Detection, FrameDims, Track, TrackId};

/// Score floor below which a pair is forcibly unmatched.
pub const DEFAULT_MATCH_FLOOR: f64 = 0.5;
/// Consecutive missed sampled frames tolerated before a prefix closes.
pub const DEFAULT_PATIENCE: u32 = 2;
/// Minimum extrapolated overlap for the heuristic tracker.
pub const DEFAULT_SORT_MIN_IOU: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("gap {0} is not a power of two")]
    BadGap(u32),
}

/// Sampling gaps `1, 2, 4, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSequence {
    max: u32,
}

impl GapSequence {
    pub fn up_to(max: u32) -> Result<Self, TrackerError> {
        if max == 0 || !max.is_power_of_two() {
            return Err(TrackerError::BadGap(max));
        }
        Ok(Self { max })
    }

    pub fn gaps(&self) -> Vec<u32> {
        let mut g = 1;
        let mut out = Vec::new();
        while g <= self.max {
            out.push(g);
            g *= 2;
        }
        out
    }

    pub fn contains(&self, gap: u32) -> bool {
        gap >= 1 && gap <= self.max && gap.is_power_of_two()
    }

    pub fn max_gap(&self) -> u32 {
        self.max
    }
}

/// A track under construction during online tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPrefix {
    pub id: TrackId,
    pub category: CategoryId,
    pub detections: Vec<Detection>,
    /// Frame gap between consecutive detections; `gaps[i]` is the distance
    /// from detection `i` to `i + 1`.
    pub gaps: Vec<u32>,
    /// Consecutive sampled frames without a match.
    pub misses: u32,
}

impl TrackPrefix {
    pub fn spawn(id: TrackId, d: Detection) -> Self {
        Self {
            id,
            category: d.category,
            detections: alloc::vec![d],
            gaps: Vec::new(),
            misses: 0,
        }
    }

    /// Rebuild a prefix from stored detections (training examples).
    pub fn from_detections(detections: &[Detection]) -> Self {
        assert!(!detections.is_empty(), "prefix needs at least one detection");
        let gaps = detections.windows(2).map(|p| p[1].frame - p[0].frame).collect();
        Self {
            id: TrackId(0),
            category: detections[0].category,
            detections: detections.to_vec(),
            gaps,
            misses: 0,
        }
    }

    pub fn last(&self) -> &Detection {
        self.detections.last().expect("prefix is non-empty")
    }

    /// Per-frame velocity from the last two detections; zero for a
    /// single-detection prefix.
    pub fn velocity(&self) -> (f64, f64) {
        let n = self.detections.len();
        if n < 2 {
            return (0.0, 0.0);
        }
        let a = &self.detections[n - 2];
        let b = &self.detections[n - 1];
        let te = f64::from(*self.gaps.last().expect("gaps parallel detections"));
        ((b.x - a.x) / te, (b.y - a.y) / te)
    }

    pub fn push(&mut self, d: Detection, t_elapsed: u32) {
        debug_assert!(t_elapsed > 0);
        debug_assert_eq!(self.last().frame + t_elapsed, d.frame);
        self.detections.push(d);
        self.gaps.push(t_elapsed);
        self.misses = 0;
    }

    pub fn into_track(self) -> Track {
        Track::new(self.id, self.category, self.detections)
            .expect("prefix maintains track invariants")
    }
}

/// Strategy for matching active prefixes against one frame's detections.
pub trait Associator {
    fn associate(
        &self,
        actives: &[TrackPrefix],
        detections: &[Detection],
        frame: u32,
        dims: FrameDims,
    ) -> Matching;
}

/// Trained-scorer association: score every (prefix, detection) pair and run
/// Hungarian assignment with a floor.
pub struct LearnedAssociator<'a> {
    pub scorer: &'a dyn MatchScorer,
    pub floor: f64,
}

impl Associator for LearnedAssociator<'_> {
    fn associate(
        &self,
        actives: &[TrackPrefix],
        detections: &[Detection],
        frame: u32,
        dims: FrameDims,
    ) -> Matching {
        let matrix = ScoreMatrix::from_fn(actives.len(), detections.len(), |i, j| {
            let t_elapsed = frame - actives[i].last().frame;
            self.scorer.score(&actives[i], &detections[j], t_elapsed, dims)
        });
        hungarian(&matrix, self.floor)
    }
}

/// Heuristic overlap tracker: extrapolate each prefix by its velocity and
/// greedily match by descending IoU.
pub struct SortAssociator {
    pub min_iou: f64,
}

impl Default for SortAssociator {
    fn default() -> Self {
        Self { min_iou: DEFAULT_SORT_MIN_IOU }
    }
}

impl Associator for SortAssociator {
    fn associate(
        &self,
        actives: &[TrackPrefix],
        detections: &[Detection],
        frame: u32,
        _dims: FrameDims,
    ) -> Matching {
        let predicted: Vec<Detection> = actives
            .iter()
            .map(|p| {
                let last = p.last();
                let te = f64::from(frame - last.frame);
                let (vx, vy) = p.velocity();
                Detection { x: last.x + vx * te, y: last.y + vy * te, ..*last }
            })
            .collect();

        let mut scored: Vec<(f64, usize, usize)> = Vec::new();
        for (i, pred) in predicted.iter().enumerate() {
            for (j, d) in detections.iter().enumerate() {
                let overlap = iou(pred, d);
                if overlap >= self.min_iou {
                    scored.push((overlap, i, j));
                }
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut row_taken = alloc::vec![false; actives.len()];
        let mut col_taken = alloc::vec![false; detections.len()];
        let mut out = Matching::default();
        for (_, i, j) in scored {
            if !row_taken[i] && !col_taken[j] {
                row_taken[i] = true;
                col_taken[j] = true;
                out.pairs.push((i, j));
            }
        }
        out.pairs.sort_unstable();
        out.unmatched_rows = (0..actives.len()).filter(|&i| !row_taken[i]).collect();
        out.unmatched_cols = (0..detections.len()).filter(|&j| !col_taken[j]).collect();
        out
    }
}

/// Advance tracking by one sampled frame.
///
/// Matched detections extend their prefixes with the elapsed frame count;
/// unmatched detections spawn new prefixes; prefixes unmatched for more
/// than `patience` sampled frames are closed and returned.
pub fn step(
    actives: &mut Vec<TrackPrefix>,
    detections: &[Detection],
    frame: u32,
    associator: &dyn Associator,
    patience: u32,
    next_id: &mut u64,
    dims: FrameDims,
) -> Vec<Track> {
    debug_assert!(actives.iter().all(|p| p.last().frame < frame));
    let matching = associator.associate(actives, detections, frame, dims);

    for &(i, j) in &matching.pairs {
        let t_elapsed = frame - actives[i].last().frame;
        actives[i].push(detections[j], t_elapsed);
    }
    for &i in &matching.unmatched_rows {
        actives[i].misses += 1;
    }

    let mut closed = Vec::new();
    let mut kept = Vec::with_capacity(actives.len());
    for prefix in actives.drain(..) {
        if prefix.misses > patience {
            closed.push(prefix.into_track());
        } else {
            kept.push(prefix);
        }
    }
    *actives = kept;

    for &j in &matching.unmatched_cols {
        actives.push(TrackPrefix::spawn(TrackId(*next_id), detections[j]));
        *next_id += 1;
    }
    closed
}

/// Track one clip at a fixed sampling gap.
///
/// `observe` produces the detections for each sampled frame (the proxy,
/// window planning and detector composition live behind it). Returns all
/// closed tracks plus whatever is still active at clip end, id-ordered.
pub fn track_clip<E>(
    duration: u32,
    gap: u32,
    mut observe: impl FnMut(u32) -> Result<Vec<Detection>, E>,
    associator: &dyn Associator,
    patience: u32,
    dims: FrameDims,
) -> Result<Vec<Track>, E> {
    let mut actives: Vec<TrackPrefix> = Vec::new();
    let mut next_id = 0u64;
    let mut tracks = Vec::new();
    let mut frame = 0u32;
    while frame < duration {
        let detections = observe(frame)?;
        tracks.extend(step(&mut actives, &detections, frame, associator, patience, &mut next_id, dims));
        frame += gap;
    }
    tracks.extend(actives.drain(..).map(TrackPrefix::into_track));
    tracks.sort_by_key(|t| t.id);
    Ok(tracks)
}
