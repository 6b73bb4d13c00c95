//! Greedy multi-module speed/accuracy tuning.
//!
//! The best-accuracy configuration is found by shrinking the detector
//! resolution 15% per dimension until accuracy strictly drops, then
//! halving the sampling rate the same way (ties favor the faster option).
//! A caching phase measures the (architecture x resolution) detection grid
//! and a (proxy level x threshold) ladder. The tuning loop then repeatedly
//! asks each module for a candidate roughly `S` faster than the current
//! configuration, evaluates the candidates on the full pipeline, and
//! adopts the most accurate one.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{ArchId, CostModel, DetectorCost, ProxyLevelId};
use crate::geometry::{FrameDims, WindowSize, CELL};
use crate::pipeline::Evaluated;
use crate::tracker::GapSequence;
use crate::windows::ProxyPlanStats;

/// Thresholds tried for the proxy score, evenly spaced over [0, 1].
pub const B_PROXY_LADDER_LEN: usize = 20;

/// Slack allowed between the requested speedup and a candidate's measured
/// end-to-end runtime; covers the discreteness of resolutions, thresholds
/// and power-of-two gaps.
pub const SPEEDUP_TOLERANCE: f64 = 0.1;

pub fn b_proxy_ladder() -> Vec<f64> {
    (0..B_PROXY_LADDER_LEN)
        .map(|j| j as f64 / (B_PROXY_LADDER_LEN - 1) as f64)
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum TunerError {
    #[error("detection cache has no entry for arch {arch:?} at {w}x{h}")]
    MissingDetectionEntry { arch: ArchId, w: u32, h: u32 },
    #[error("proxy cache is empty")]
    EmptyProxyCache,
    #[error("gap {0} is outside the configured gap sequence")]
    BadGap(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    SortHeuristic,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub level: ProxyLevelId,
    pub b_proxy: f64,
}

/// One full parameter assignment across the pipeline modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub arch: ArchId,
    pub resolution: WindowSize,
    pub confidence_threshold: f64,
    pub proxy: Option<ProxyConfig>,
    pub gap: u32,
    pub tracker: TrackerKind,
}

impl Configuration {
    /// Slowest baseline: heaviest architecture at native resolution and
    /// rate, no proxy, heuristic tracker.
    pub fn slowest(arch: ArchId, native: FrameDims, confidence_threshold: f64) -> Self {
        Self {
            arch,
            resolution: native.full_window(),
            confidence_threshold,
            proxy: None,
            gap: 1,
            tracker: TrackerKind::SortHeuristic,
        }
    }

    pub fn validate(&self, gaps: &GapSequence) -> Result<(), TunerError> {
        if !gaps.contains(self.gap) {
            return Err(TunerError::BadGap(self.gap));
        }
        Ok(())
    }
}

/// Resolution ladder: native scaled by 0.85 per dimension each step,
/// rounded to multiples of 32, until either dimension falls below 64.
pub fn resolution_ladder(native: FrameDims) -> Vec<WindowSize> {
    let snap = |px: f64| -> u32 { (libm::round(px / f64::from(CELL)).max(1.0) as u32) * CELL };
    let mut out = Vec::new();
    let (mut w, mut h) = (f64::from(native.w), f64::from(native.h));
    loop {
        let size = WindowSize::new(snap(w), snap(h));
        if size.w < 64 || size.h < 64 {
            break;
        }
        if out.last() != Some(&size) {
            out.push(size);
        }
        w *= 0.85;
        h *= 0.85;
    }
    out
}

/// Best-accuracy search trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaStep {
    pub stage: String,
    pub config: Configuration,
    pub accuracy: f64,
    pub runtime: f64,
}

/// Best-accuracy configuration plus its measured accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBest {
    pub config: Configuration,
    pub accuracy: f64,
    /// Accuracy of the kept resolution at native rate (before the rate
    /// stage); equals `accuracy` when the search keeps gap 1.
    pub native_rate_accuracy: f64,
    pub trace: Vec<ThetaStep>,
}

/// Search for the best-accuracy configuration.
///
/// Starts from the slowest configuration, shrinks resolution by 15% per
/// dimension until accuracy strictly decreases (ties keep shrinking and
/// prefer the faster setting), then doubles the sampling gap under the
/// same rule. The proxy stays off and the heuristic tracker is used
/// throughout.
pub fn select_theta_best<E>(
    start: Configuration,
    native: FrameDims,
    gaps: &GapSequence,
    mut eval: impl FnMut(&Configuration) -> Result<Evaluated, E>,
) -> Result<ThetaBest, E> {
    let mut trace = Vec::new();
    let record =
        |stage: &str, config: &Configuration, m: Evaluated, trace: &mut Vec<ThetaStep>| {
            trace.push(ThetaStep {
                stage: String::from(stage),
                config: config.clone(),
                accuracy: m.accuracy,
                runtime: m.runtime,
            });
        };

    let ladder = resolution_ladder(native);
    let mut best = start.clone();
    let first = eval(&best)?;
    record("resolution", &best, first, &mut trace);
    let mut best_acc = first.accuracy;

    for size in ladder.iter().skip(1) {
        let candidate = Configuration { resolution: *size, ..best.clone() };
        let m = eval(&candidate)?;
        record("resolution", &candidate, m, &mut trace);
        if m.accuracy < best_acc {
            break;
        }
        // Flat counts as non-decreasing: keep shrinking, prefer the
        // faster (smaller) resolution at equal accuracy.
        best = candidate;
        best_acc = m.accuracy;
    }
    let native_rate_accuracy = best_acc;

    let mut gap = best.gap;
    while gap * 2 <= gaps.max_gap() {
        gap *= 2;
        let candidate = Configuration { gap, ..best.clone() };
        let m = eval(&candidate)?;
        record("rate", &candidate, m, &mut trace);
        if m.accuracy < best_acc {
            break;
        }
        best = candidate;
        best_acc = m.accuracy;
    }

    Ok(ThetaBest { config: best, accuracy: best_acc, native_rate_accuracy, trace })
}

/// One measured (architecture, resolution) cell of the detection grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCacheEntry {
    pub arch: ArchId,
    pub resolution: WindowSize,
    pub runtime: f64,
    pub accuracy: f64,
}

/// Complete detection grid over architectures x resolution ladder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionCache {
    pub entries: Vec<DetectionCacheEntry>,
}

impl DetectionCache {
    pub fn entry(&self, arch: ArchId, resolution: WindowSize) -> Option<&DetectionCacheEntry> {
        self.entries
            .iter()
            .find(|e| e.arch == arch && e.resolution == resolution)
    }
}

/// Cached proxy behavior at one (level, threshold) rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyCacheEntry {
    pub level: ProxyLevelId,
    pub b_proxy: f64,
    pub stats: ProxyPlanStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyCache {
    pub entries: Vec<ProxyCacheEntry>,
    /// Validation frames the ladder was computed over.
    pub frames: u64,
}

/// Everything the tuning loop needs to generate candidates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneCaches {
    pub detection: DetectionCache,
    pub proxy: ProxyCache,
}

/// Caching phase: measure the detection grid at native rate (other
/// parameters from the best-accuracy configuration) and the proxy ladder
/// over every (level, threshold) rung.
pub fn cache_phase<E>(
    theta_best: &Configuration,
    archs: &[ArchId],
    native: FrameDims,
    levels: &[ProxyLevelId],
    mut eval: impl FnMut(&Configuration) -> Result<Evaluated, E>,
    mut proxy_stats: impl FnMut(ProxyLevelId, f64) -> Result<ProxyPlanStats, E>,
) -> Result<TuneCaches, E> {
    let mut caches = TuneCaches::default();
    for &arch in archs {
        for &resolution in &resolution_ladder(native) {
            let config = Configuration {
                arch,
                resolution,
                gap: 1,
                proxy: None,
                tracker: TrackerKind::SortHeuristic,
                ..theta_best.clone()
            };
            let m = eval(&config)?;
            caches.detection.entries.push(DetectionCacheEntry {
                arch,
                resolution,
                runtime: m.runtime,
                accuracy: m.accuracy,
            });
        }
    }
    for &level in levels {
        for &b in &b_proxy_ladder() {
            let stats = proxy_stats(level, b)?;
            caches.proxy.frames = stats.frames;
            caches.proxy.entries.push(ProxyCacheEntry { level, b_proxy: b, stats });
        }
    }
    Ok(caches)
}

/// Detection module candidate: the cached (arch, resolution) with the
/// highest accuracy among entries at least `speedup` faster than the
/// current one; ties prefer the faster entry.
pub fn next_detection(
    current: &Configuration,
    caches: &DetectionCache,
    speedup: f64,
) -> Result<Option<Configuration>, TunerError> {
    let here = caches.entry(current.arch, current.resolution).ok_or(
        TunerError::MissingDetectionEntry {
            arch: current.arch,
            w: current.resolution.w,
            h: current.resolution.h,
        },
    )?;
    let budget = (1.0 - speedup) * here.runtime;
    let best = caches
        .entries
        .iter()
        .filter(|e| e.runtime <= budget)
        .min_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then(a.runtime.total_cmp(&b.runtime))
                .then(a.arch.cmp(&b.arch))
                .then(a.resolution.cmp(&b.resolution))
        });
    Ok(best.map(|e| Configuration { arch: e.arch, resolution: e.resolution, ..current.clone() }))
}

/// Estimated proxy-plus-detector runtime of a configuration over the
/// cached validation frames, re-priced under the configuration's detector.
/// Without a proxy this is one full-frame window per frame.
pub fn estimate_proxy_runtime(
    config: &Configuration,
    caches: &ProxyCache,
    cost: &CostModel,
    native: FrameDims,
) -> Result<f64, TunerError> {
    let det = DetectorCost::new(cost, config.arch, native, config.resolution);
    match &config.proxy {
        None => {
            let per_frame = det
                .full_frame_time()
                .unwrap_or(f64::INFINITY);
            Ok(caches.frames as f64 * per_frame)
        }
        Some(p) => {
            let entry = caches
                .entries
                .iter()
                .find(|e| e.level == p.level && e.b_proxy == p.b_proxy)
                .ok_or(TunerError::EmptyProxyCache)?;
            let proxy_time = cost.proxy_time(p.level).map_err(|_| TunerError::EmptyProxyCache)?;
            let mut total = caches.frames as f64 * proxy_time;
            for (size, count) in &entry.stats.rect_counts {
                total += *count as f64 * det.rect_time(*size).unwrap_or(f64::INFINITY);
            }
            Ok(total)
        }
    }
}

/// Proxy module candidate: enable the proxy if off, then pick the
/// (level, threshold) with the highest recall among rungs whose estimated
/// runtime is at least `speedup` faster than the current estimate; recall
/// ties prefer the lower runtime.
pub fn next_proxy(
    current: &Configuration,
    caches: &ProxyCache,
    cost: &CostModel,
    native: FrameDims,
    speedup: f64,
) -> Result<Option<Configuration>, TunerError> {
    if caches.entries.is_empty() {
        return Err(TunerError::EmptyProxyCache);
    }
    let budget = (1.0 - speedup) * estimate_proxy_runtime(current, caches, cost, native)?;
    let mut best: Option<(f64, f64, &ProxyCacheEntry)> = None; // (recall, runtime, entry)
    for entry in &caches.entries {
        if let Some(p) = &current.proxy {
            if p.level == entry.level && p.b_proxy == entry.b_proxy {
                continue;
            }
        }
        let candidate = Configuration {
            proxy: Some(ProxyConfig { level: entry.level, b_proxy: entry.b_proxy }),
            ..current.clone()
        };
        let runtime = estimate_proxy_runtime(&candidate, caches, cost, native)?;
        if runtime > budget {
            continue;
        }
        let recall = entry.stats.recall;
        let better = match &best {
            None => true,
            Some((r, t, _)) => {
                recall > *r || (recall == *r && runtime < *t)
            }
        };
        if better {
            best = Some((recall, runtime, entry));
        }
    }
    Ok(best.map(|(_, _, e)| Configuration {
        proxy: Some(ProxyConfig { level: e.level, b_proxy: e.b_proxy }),
        ..current.clone()
    }))
}

/// Tracking module candidate: the smallest power-of-two gap that processes
/// at least `speedup` fewer frames, i.e. `g' = ceil_pow2(g / (1 - S))`;
/// exhausted at the maximum gap.
pub fn next_tracking(
    current: &Configuration,
    gaps: &GapSequence,
    speedup: f64,
) -> Option<Configuration> {
    let target = f64::from(current.gap) / (1.0 - speedup);
    let next = (libm::ceil(target) as u32).next_power_of_two();
    if next <= current.gap || next > gaps.max_gap() {
        return None;
    }
    Some(Configuration { gap: next, ..current.clone() })
}

/// One adopted point on the speed/accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub id: String,
    pub config: Configuration,
    pub accuracy: f64,
    pub runtime: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TuneOptions {
    /// Target per-step speedup S.
    pub speedup: f64,
    pub max_iters: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { speedup: 0.30, max_iters: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub curve: Vec<CurvePoint>,
    /// Full-pipeline evaluations spent (O(modules x iterations)).
    pub evaluations: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Module {
    Detection,
    Proxy,
    Tracking,
}

/// Greedy tuning loop emitting the speed/accuracy curve.
///
/// Starts from the best-accuracy configuration switched to the learned
/// tracker. Each iteration collects one candidate per non-exhausted
/// module, evaluates all of them on the full pipeline, and adopts the
/// most accurate (ties go to the faster candidate, then module order).
/// Stops when every module is exhausted or after `max_iters` iterations.
pub fn tune<E: From<TunerError>>(
    theta_best: &Configuration,
    caches: &TuneCaches,
    cost: &CostModel,
    native: FrameDims,
    gaps: &GapSequence,
    opts: &TuneOptions,
    mut eval_batch: impl FnMut(&[Configuration]) -> Result<Vec<Evaluated>, E>,
) -> Result<TuneResult, E> {
    let start = Configuration { tracker: TrackerKind::Learned, ..theta_best.clone() };
    let first = eval_batch(core::slice::from_ref(&start))?;
    let mut evaluations = first.len();
    let mut current = start.clone();
    let mut curve = alloc::vec![CurvePoint {
        id: String::from("cfg-000"),
        config: start,
        accuracy: first[0].accuracy,
        runtime: first[0].runtime,
    }];

    let mut iterations = 0usize;
    while iterations < opts.max_iters {
        let mut candidates: Vec<(Module, Configuration)> = Vec::new();
        if let Some(c) = next_detection(&current, &caches.detection, opts.speedup)
            .map_err(E::from)?
        {
            candidates.push((Module::Detection, c));
        }
        if let Some(c) =
            next_proxy(&current, &caches.proxy, cost, native, opts.speedup).map_err(E::from)?
        {
            candidates.push((Module::Proxy, c));
        }
        if let Some(c) = next_tracking(&current, gaps, opts.speedup) {
            candidates.push((Module::Tracking, c));
        }
        if candidates.is_empty() {
            break;
        }
        iterations += 1;

        let configs: Vec<Configuration> = candidates.iter().map(|(_, c)| c.clone()).collect();
        let measured = eval_batch(&configs)?;
        evaluations += measured.len();

        // Candidates speed up by construction in their module-local
        // estimates, but the requested speedup is an end-to-end one: a
        // candidate whose measured runtime does not come close to the
        // target (within a discretization tolerance) is no speedup at all
        // and is not adopted.
        let prev_runtime = curve.last().expect("curve has the start").runtime;
        let budget = (1.0 - opts.speedup + SPEEDUP_TOLERANCE) * prev_runtime;
        let pick = (0..candidates.len())
            .filter(|&i| measured[i].runtime <= budget)
            .min_by(|&a, &b| {
                measured[b]
                    .accuracy
                    .total_cmp(&measured[a].accuracy)
                    .then(measured[a].runtime.total_cmp(&measured[b].runtime))
                    .then(a.cmp(&b))
            });
        let Some(pick) = pick else {
            break;
        };

        current = candidates[pick].1.clone();
        curve.push(CurvePoint {
            id: format!("cfg-{:03}", curve.len()),
            config: current.clone(),
            accuracy: measured[pick].accuracy,
            runtime: measured[pick].runtime,
        });
    }

    Ok(TuneResult { curve, evaluations, iterations })
}
