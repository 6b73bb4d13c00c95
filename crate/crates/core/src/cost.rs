//! Table-driven cost model.
//!
//! Every "runtime" in the pipeline is a sum of lookups in this table, so
//! speed numbers are deterministic and testable. Detector cost is keyed by
//! (architecture, window size); the proxy model has a per-level cost; frame
//! decode scales with the decoded resolution.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FrameDims, WindowSize, CELL};

/// Detector architecture identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ArchId(pub u32);

/// Proxy model resolution level; lower level = higher resolution.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ProxyLevelId(pub u32);

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no detector cost entry for arch {arch:?} at {w}x{h}")]
    MissingDetectCost { arch: ArchId, w: u32, h: u32 },
    #[error("no proxy cost entry for level {0:?}")]
    MissingProxyCost(ProxyLevelId),
    #[error("cost table contains a non-positive time")]
    NonPositiveCost,
    #[error("detector cost for arch {0:?} is not strictly increasing in window area")]
    NonMonotonicCost(ArchId),
}

/// Maps (architecture, window size) and proxy level to simulated time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostModelRepr", into = "CostModelRepr")]
pub struct CostModel {
    detect: BTreeMap<ArchId, BTreeMap<WindowSize, f64>>,
    proxy: BTreeMap<ProxyLevelId, f64>,
    /// Decode cost per 1000 pixels of decoded area, charged per processed frame.
    decode_per_kpx: f64,
    /// Association bookkeeping cost per detection fed to the tracker.
    track_per_detection: f64,
    /// Endpoint refinement cost per refined track.
    refine_per_track: f64,
}

impl CostModel {
    pub fn new(
        detect: BTreeMap<ArchId, BTreeMap<WindowSize, f64>>,
        proxy: BTreeMap<ProxyLevelId, f64>,
        decode_per_kpx: f64,
        track_per_detection: f64,
        refine_per_track: f64,
    ) -> Result<Self, CostError> {
        let model = Self {
            detect,
            proxy,
            decode_per_kpx,
            track_per_detection,
            refine_per_track,
        };
        model.validate()?;
        Ok(model)
    }

    /// Fill the detector table for one architecture from an affine model in
    /// window area: `base + per_kpx * area / 1000`, over every size with both
    /// dimensions multiples of 32 up to `max`.
    pub fn affine_arch_table(max: FrameDims, base: f64, per_kpx: f64) -> BTreeMap<WindowSize, f64> {
        let mut table = BTreeMap::new();
        let mut w = CELL;
        while w <= max.w {
            let mut h = CELL;
            while h <= max.h {
                let size = WindowSize::new(w, h);
                table.insert(size, base + per_kpx * size.area() as f64 / 1000.0);
                h += CELL;
            }
            w += CELL;
        }
        table
    }

    fn validate(&self) -> Result<(), CostError> {
        if self.decode_per_kpx <= 0.0
            || self.track_per_detection <= 0.0
            || self.refine_per_track <= 0.0
            || self.proxy.values().any(|t| *t <= 0.0)
        {
            return Err(CostError::NonPositiveCost);
        }
        for (arch, table) in &self.detect {
            let mut by_area: Vec<(u64, f64)> =
                table.iter().map(|(s, t)| (s.area(), *t)).collect();
            if by_area.iter().any(|(_, t)| *t <= 0.0) {
                return Err(CostError::NonPositiveCost);
            }
            by_area.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut prev_area = 0u64;
            let mut prev_max = 0.0f64;
            let mut group_max = 0.0f64;
            for (area, t) in by_area {
                if area != prev_area {
                    prev_max = group_max;
                    prev_area = area;
                }
                if t <= prev_max {
                    return Err(CostError::NonMonotonicCost(*arch));
                }
                group_max = group_max.max(t);
            }
        }
        Ok(())
    }

    pub fn archs(&self) -> impl Iterator<Item = ArchId> + '_ {
        self.detect.keys().copied()
    }

    pub fn proxy_levels(&self) -> impl Iterator<Item = ProxyLevelId> + '_ {
        self.proxy.keys().copied()
    }

    pub fn detect_time(&self, arch: ArchId, size: WindowSize) -> Result<f64, CostError> {
        self.detect
            .get(&arch)
            .and_then(|t| t.get(&size))
            .copied()
            .ok_or(CostError::MissingDetectCost { arch, w: size.w, h: size.h })
    }

    pub fn proxy_time(&self, level: ProxyLevelId) -> Result<f64, CostError> {
        self.proxy
            .get(&level)
            .copied()
            .ok_or(CostError::MissingProxyCost(level))
    }

    pub fn decode_time(&self, resolution: WindowSize) -> f64 {
        self.decode_per_kpx * resolution.area() as f64 / 1000.0
    }

    pub fn track_time(&self, detections: usize) -> f64 {
        self.track_per_detection * detections as f64
    }

    pub fn refine_time(&self, tracks: usize) -> f64 {
        self.refine_per_track * tracks as f64
    }
}

/// Cost view of one detector configuration: rects planned in native pixel
/// coordinates are executed at the configured input resolution, so their
/// cost is looked up at the scaled size (snapped to multiples of 32).
#[derive(Debug, Clone, Copy)]
pub struct DetectorCost<'a> {
    model: &'a CostModel,
    arch: ArchId,
    native: FrameDims,
    resolution: WindowSize,
}

impl<'a> DetectorCost<'a> {
    pub fn new(model: &'a CostModel, arch: ArchId, native: FrameDims, resolution: WindowSize) -> Self {
        Self { model, arch, native, resolution }
    }

    pub fn arch(&self) -> ArchId {
        self.arch
    }

    pub fn model(&self) -> &CostModel {
        self.model
    }

    pub fn resolution(&self) -> WindowSize {
        self.resolution
    }

    /// Size at which a native-coordinate window actually runs.
    pub fn scaled_size(&self, size: WindowSize) -> WindowSize {
        let sx = f64::from(self.resolution.w) / f64::from(self.native.w);
        let sy = f64::from(self.resolution.h) / f64::from(self.native.h);
        let snap = |px: f64| -> u32 {
            let cells = libm::round(px / f64::from(CELL)).max(1.0);
            cells as u32 * CELL
        };
        WindowSize::new(snap(f64::from(size.w) * sx), snap(f64::from(size.h) * sy))
    }

    pub fn rect_time(&self, size: WindowSize) -> Result<f64, CostError> {
        self.model.detect_time(self.arch, self.scaled_size(size))
    }

    pub fn full_frame_time(&self) -> Result<f64, CostError> {
        self.rect_time(self.native.full_window())
    }

    pub fn decode_time(&self) -> f64 {
        self.model.decode_time(self.resolution)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectCostEntry {
    arch: ArchId,
    w: u32,
    h: u32,
    time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProxyCostEntry {
    level: ProxyLevelId,
    time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostModelRepr {
    decode_per_kpx: f64,
    track_per_detection: f64,
    refine_per_track: f64,
    detect: Vec<DetectCostEntry>,
    proxy: Vec<ProxyCostEntry>,
}

impl From<CostModel> for CostModelRepr {
    fn from(m: CostModel) -> Self {
        let detect = m
            .detect
            .iter()
            .flat_map(|(arch, table)| {
                table.iter().map(|(size, time)| DetectCostEntry {
                    arch: *arch,
                    w: size.w,
                    h: size.h,
                    time: *time,
                })
            })
            .collect();
        let proxy = m
            .proxy
            .iter()
            .map(|(level, time)| ProxyCostEntry { level: *level, time: *time })
            .collect();
        CostModelRepr {
            decode_per_kpx: m.decode_per_kpx,
            track_per_detection: m.track_per_detection,
            refine_per_track: m.refine_per_track,
            detect,
            proxy,
        }
    }
}

impl TryFrom<CostModelRepr> for CostModel {
    type Error = CostError;

    fn try_from(r: CostModelRepr) -> Result<Self, CostError> {
        let mut detect: BTreeMap<ArchId, BTreeMap<WindowSize, f64>> = BTreeMap::new();
        for e in r.detect {
            detect
                .entry(e.arch)
                .or_default()
                .insert(WindowSize::new(e.w, e.h), e.time);
        }
        let proxy = r.proxy.into_iter().map(|e| (e.level, e.time)).collect();
        CostModel::new(
            detect,
            proxy,
            r.decode_per_kpx,
            r.track_per_detection,
            r.refine_per_track,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CostModel {
        let dims = FrameDims::new(128, 96);
        let mut detect = BTreeMap::new();
        detect.insert(ArchId(0), CostModel::affine_arch_table(dims, 1.0, 0.05));
        let mut proxy = BTreeMap::new();
        proxy.insert(ProxyLevelId(0), 0.5);
        CostModel::new(detect, proxy, 0.002, 0.001, 0.01).unwrap()
    }

    #[test]
    fn affine_table_covers_all_multiples() {
        let m = model();
        for w in [32u32, 64, 96, 128] {
            for h in [32u32, 64, 96] {
                assert!(m.detect_time(ArchId(0), WindowSize::new(w, h)).is_ok());
            }
        }
        assert_eq!(
            m.detect_time(ArchId(0), WindowSize::new(160, 32)),
            Err(CostError::MissingDetectCost { arch: ArchId(0), w: 160, h: 32 })
        );
    }

    #[test]
    fn monotonic_validation_rejects_flat_table() {
        let mut detect: BTreeMap<ArchId, BTreeMap<WindowSize, f64>> = BTreeMap::new();
        let mut t = BTreeMap::new();
        t.insert(WindowSize::new(32, 32), 1.0);
        t.insert(WindowSize::new(64, 64), 1.0);
        detect.insert(ArchId(0), t);
        let err = CostModel::new(detect, BTreeMap::new(), 0.1, 0.1, 0.1).unwrap_err();
        assert_eq!(err, CostError::NonMonotonicCost(ArchId(0)));
    }

    #[test]
    fn scaled_lookup_uses_reduced_resolution() {
        let m = model();
        let native = FrameDims::new(128, 96);
        let full = DetectorCost::new(&m, ArchId(0), native, WindowSize::new(128, 96));
        let half = DetectorCost::new(&m, ArchId(0), native, WindowSize::new(64, 32));
        let size = WindowSize::new(64, 64);
        assert_eq!(full.scaled_size(size), size);
        // 64 * (64/128) = 32, 64 * (32/96) = 21.3 -> snaps to 32.
        assert_eq!(half.scaled_size(size), WindowSize::new(32, 32));
        assert!(half.rect_time(size).unwrap() < full.rect_time(size).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let m = model();
        let s = serde_json::to_string(&m).unwrap();
        let back: CostModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
