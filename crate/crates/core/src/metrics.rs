//! Count-based accuracy against spatial patterns, and post-track queries.
//!
//! A pattern matches a track when the track starts in the pattern's start
//! region and ends in its end region. Point-in-polygon uses the even-odd
//! rule with points on an edge counted inside.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Track;

pub type Polygon = Vec<(f64, f64)>;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no ground-truth labels for clip {0}")]
    MissingClipLabels(u32),
    #[error("no ground-truth count for pattern {pattern:?} in clip {clip}")]
    MissingPatternCount { clip: u32, pattern: String },
}

/// Directional spatial pattern: tracks must start in `start` and end in `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialPattern {
    pub id: String,
    pub start: Polygon,
    pub end: Polygon,
}

/// Ground-truth unique-object counts per clip and pattern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountLabels {
    pub clips: BTreeMap<u32, BTreeMap<String, u32>>,
}

/// Even-odd point-in-polygon test; points exactly on an edge are inside.
pub fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let (px, py) = p;
    // On-edge check first so the crossing parity cannot exclude boundaries.
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        let cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
        if cross == 0.0
            && px >= x0.min(x1)
            && px <= x0.max(x1)
            && py >= y0.min(y1)
            && py <= y0.max(y1)
        {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        if (y0 > py) != (y1 > py) {
            let xi = x0 + (py - y0) / (y1 - y0) * (x1 - x0);
            if px < xi {
                inside = !inside;
            }
        }
    }
    inside
}

/// True iff the track's first detection center lies in the start region and
/// its last detection center lies in the end region.
pub fn match_pattern(track: &Track, pattern: &SpatialPattern) -> bool {
    point_in_polygon(track.first().center(), &pattern.start)
        && point_in_polygon(track.last().center(), &pattern.end)
}

/// Predicted unique count for one pattern: tracks matching it.
pub fn pattern_count(tracks: &[Track], pattern: &SpatialPattern) -> u32 {
    tracks.iter().filter(|t| match_pattern(t, pattern)).count() as u32
}

/// Clamped relative count agreement, averaged over patterns then clips.
///
/// Per (clip, pattern): `max(0, 1 - |predicted - truth| / max(truth, 1))`.
pub fn count_accuracy(
    tracks_per_clip: &[Vec<Track>],
    patterns: &[SpatialPattern],
    labels: &CountLabels,
) -> Result<f64, MetricsError> {
    if tracks_per_clip.is_empty() || patterns.is_empty() {
        return Ok(1.0);
    }
    let mut clip_sum = 0.0;
    for (clip_idx, tracks) in tracks_per_clip.iter().enumerate() {
        let clip = clip_idx as u32;
        let clip_labels = labels
            .clips
            .get(&clip)
            .ok_or(MetricsError::MissingClipLabels(clip))?;
        let mut pat_sum = 0.0;
        for pattern in patterns {
            let truth = *clip_labels.get(&pattern.id).ok_or_else(|| {
                MetricsError::MissingPatternCount { clip, pattern: pattern.id.clone() }
            })?;
            let predicted = pattern_count(tracks, pattern);
            let denom = truth.max(1) as f64;
            let err = (f64::from(predicted) - f64::from(truth)).abs() / denom;
            pat_sum += (1.0 - err).max(0.0);
        }
        clip_sum += pat_sum / patterns.len() as f64;
    }
    Ok(clip_sum / tracks_per_clip.len() as f64)
}

/// Frames where at least `min_count` track detections lie in `region`,
/// ranked by the minimum duration of the in-region tracks, greedily taken
/// at pairwise spacing of at least `spacing` frames, up to `limit` frames.
/// Tracks with a single detection are ignored. Output is frame-sorted.
pub fn limit_query(
    tracks: &[Track],
    region: &[(f64, f64)],
    min_count: usize,
    spacing: u32,
    limit: usize,
) -> Vec<u32> {
    // frame -> (in-region detection count, min duration of those tracks)
    let mut occupancy: BTreeMap<u32, (usize, u32)> = BTreeMap::new();
    for track in tracks {
        if track.detections.len() < 2 {
            continue;
        }
        let duration = track.last().frame - track.first().frame + 1;
        for d in &track.detections {
            if point_in_polygon(d.center(), region) {
                let entry = occupancy.entry(d.frame).or_insert((0, u32::MAX));
                entry.0 += 1;
                entry.1 = entry.1.min(duration);
            }
        }
    }
    let mut candidates: Vec<(u32, u32)> = occupancy
        .into_iter()
        .filter(|(_, (count, _))| *count >= min_count)
        .map(|(frame, (_, min_dur))| (frame, min_dur))
        .collect();
    // Highest minimum duration first; earlier frame breaks ties.
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<u32> = Vec::new();
    for (frame, _) in candidates {
        if chosen.len() >= limit {
            break;
        }
        if chosen.iter().all(|c| c.abs_diff(frame) >= spacing) {
            chosen.push(frame);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CategoryId, Detection, TrackId};

    fn square(cx: f64, cy: f64, half: f64) -> Polygon {
        alloc::vec![
            (cx - half, cy - half),
            (cx + half, cy - half),
            (cx + half, cy + half),
            (cx - half, cy + half),
        ]
    }

    fn track_through(points: &[(u32, f64, f64)]) -> Track {
        let dets = points
            .iter()
            .map(|&(frame, x, y)| Detection {
                frame,
                x,
                y,
                w: 10.0,
                h: 10.0,
                confidence: 1.0,
                category: CategoryId(0),
            })
            .collect();
        Track::new(TrackId(0), CategoryId(0), dets).unwrap()
    }

    #[test]
    fn pattern_matches_directional_track() {
        let p = SpatialPattern {
            id: "a".into(),
            start: square(10.0, 10.0, 8.0),
            end: square(90.0, 10.0, 8.0),
        };
        let forward = track_through(&[(0, 10.0, 10.0), (5, 50.0, 10.0), (9, 90.0, 10.0)]);
        let reverse = track_through(&[(0, 90.0, 10.0), (5, 50.0, 10.0), (9, 10.0, 10.0)]);
        assert!(match_pattern(&forward, &p));
        assert!(!match_pattern(&reverse, &p));
    }

    #[test]
    fn boundary_point_counts_inside() {
        let poly = square(10.0, 10.0, 5.0);
        assert!(point_in_polygon((5.0, 10.0), &poly));
        assert!(point_in_polygon((5.0, 5.0), &poly));
        assert!(point_in_polygon((10.0, 15.0), &poly));
        assert!(!point_in_polygon((4.999, 10.0), &poly));
    }

    fn labels_for(counts: &[(u32, &str, u32)]) -> CountLabels {
        let mut labels = CountLabels::default();
        for &(clip, pattern, count) in counts {
            labels
                .clips
                .entry(clip)
                .or_default()
                .insert(pattern.into(), count);
        }
        labels
    }

    #[test]
    fn count_accuracy_exact_is_one() {
        let p = SpatialPattern {
            id: "a".into(),
            start: square(10.0, 10.0, 8.0),
            end: square(90.0, 10.0, 8.0),
        };
        let t = track_through(&[(0, 10.0, 10.0), (9, 90.0, 10.0)]);
        let labels = labels_for(&[(0, "a", 1)]);
        let acc = count_accuracy(&[alloc::vec![t]], &[p], &labels).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn count_accuracy_formula_cases() {
        let p = SpatialPattern {
            id: "a".into(),
            start: square(10.0, 10.0, 8.0),
            end: square(90.0, 10.0, 8.0),
        };
        // Truth 10, predicted 7 -> 0.7.
        let tracks: Vec<Track> = (0..7)
            .map(|i| {
                let mut t = track_through(&[(0, 10.0, 10.0), (9, 90.0, 10.0)]);
                t.id = TrackId(i);
                t
            })
            .collect();
        let labels = labels_for(&[(0, "a", 10)]);
        let acc = count_accuracy(core::slice::from_ref(&tracks), core::slice::from_ref(&p), &labels).unwrap();
        assert!((acc - 0.7).abs() < 1e-12);

        // Truth 0, predicted 2 -> clamped to 0.
        let labels = labels_for(&[(0, "a", 0)]);
        let two = tracks[..2].to_vec();
        let acc = count_accuracy(&[two], &[p], &labels).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn count_accuracy_is_one_iff_all_exact() {
        let p1 = SpatialPattern {
            id: "a".into(),
            start: square(10.0, 10.0, 8.0),
            end: square(90.0, 10.0, 8.0),
        };
        let p2 = SpatialPattern {
            id: "b".into(),
            start: square(10.0, 90.0, 8.0),
            end: square(90.0, 90.0, 8.0),
        };
        let ta = track_through(&[(0, 10.0, 10.0), (9, 90.0, 10.0)]);
        let tb = track_through(&[(0, 10.0, 90.0), (9, 90.0, 90.0)]);
        let tracks = alloc::vec![ta, tb];

        let exact = labels_for(&[(0, "a", 1), (0, "b", 1)]);
        let acc = count_accuracy(core::slice::from_ref(&tracks), &[p1.clone(), p2.clone()], &exact).unwrap();
        assert_eq!(acc, 1.0);

        // One pattern off by one: strictly below 1 but within [0, 1].
        let off = labels_for(&[(0, "a", 2), (0, "b", 1)]);
        let acc = count_accuracy(&[tracks], &[p1, p2], &off).unwrap();
        assert!(acc < 1.0 && (0.0..=1.0).contains(&acc));
    }

    #[test]
    fn count_accuracy_missing_labels_errors() {
        let p = SpatialPattern {
            id: "a".into(),
            start: square(10.0, 10.0, 8.0),
            end: square(90.0, 10.0, 8.0),
        };
        let t = track_through(&[(0, 10.0, 10.0), (9, 90.0, 10.0)]);
        let err = count_accuracy(&[alloc::vec![t]], &[p], &CountLabels::default()).unwrap_err();
        assert_eq!(err, MetricsError::MissingClipLabels(0));
    }

    #[test]
    fn limit_query_empty_when_no_frame_qualifies() {
        let region = square(50.0, 50.0, 40.0);
        let t = track_through(&[(0, 50.0, 50.0), (5, 55.0, 50.0)]);
        assert!(limit_query(&[t], &region, 2, 1, 20).is_empty());
    }

    #[test]
    fn limit_query_ranks_by_min_duration_and_spaces() {
        let region = square(50.0, 50.0, 40.0);
        // Two long tracks co-occur in-region at frames 10..=14; a short third
        // track joins only at frame 12, dragging that frame's rank down.
        let a = track_through(&(0..30).map(|f| (f, 50.0, 50.0)).collect::<Vec<_>>());
        let b = track_through(&(5..25).map(|f| (f, 60.0, 60.0)).collect::<Vec<_>>());
        let c = track_through(&[(12, 40.0, 40.0), (13, 200.0, 200.0)]);
        let got = limit_query(&[a, b, c], &region, 2, 3, 2);
        // Frames 5..=24 qualify with min duration 20 except frame 12 (min 2).
        // Ranking prefers duration-20 frames in ascending frame order: 5 then 8.
        assert_eq!(got, alloc::vec![5, 8]);
        let all = limit_query(
            &[
                track_through(&(0..30).map(|f| (f, 50.0, 50.0)).collect::<Vec<_>>()),
                track_through(&(0..30).map(|f| (f, 60.0, 60.0)).collect::<Vec<_>>()),
            ],
            &region,
            2,
            7,
            20,
        );
        for pair in all.windows(2) {
            assert!(pair[1] - pair[0] >= 7);
        }
    }

    #[test]
    fn limit_query_ignores_single_detection_tracks() {
        let region = square(50.0, 50.0, 40.0);
        let singles: Vec<Track> = (0..5)
            .map(|i| {
                let mut t = track_through(&[(3, 50.0, 50.0)]);
                t.id = TrackId(i);
                t
            })
            .collect();
        assert!(limit_query(&singles, &region, 2, 1, 20).is_empty());
    }

    /// Exhaustive frame-scan oracle over known occupancy.
    #[test]
    fn limit_query_matches_full_scan_oracle() {
        let region = square(100.0, 100.0, 90.0);
        let mut tracks = Vec::new();
        // Deterministic zoo of tracks weaving in and out of the region.
        for i in 0..8u64 {
            let pts: Vec<(u32, f64, f64)> = (0..40)
                .map(|f| {
                    let inside = !(f + i as u32).is_multiple_of(3);
                    let x = if inside { 100.0 } else { 300.0 };
                    (f, x, 100.0 + i as f64)
                })
                .collect();
            let mut t = track_through(&pts);
            t.id = TrackId(i);
            tracks.push(t);
        }
        let got = limit_query(&tracks, &region, 5, 4, 6);

        // Oracle: recompute occupancy per frame directly.
        let mut per_frame: Vec<(u32, usize, u32)> = (0..40)
            .map(|f| {
                let mut count = 0;
                let mut min_dur = u32::MAX;
                for t in &tracks {
                    if let Some(d) = t.detections.iter().find(|d| d.frame == f) {
                        if point_in_polygon(d.center(), &region) {
                            count += 1;
                            min_dur = min_dur.min(t.last().frame - t.first().frame + 1);
                        }
                    }
                }
                (f, count, min_dur)
            })
            .filter(|&(_, count, _)| count >= 5)
            .collect();
        per_frame.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        let mut expect: Vec<u32> = Vec::new();
        for (f, _, _) in per_frame {
            if expect.len() >= 6 {
                break;
            }
            if expect.iter().all(|c| c.abs_diff(f) >= 4) {
                expect.push(f);
            }
        }
        expect.sort_unstable();
        assert_eq!(got, expect);
    }
}
