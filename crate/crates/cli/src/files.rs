//! On-disk artifact formats and typed load/save helpers.
//!
//! Everything is pretty-printed JSON with a trailing newline; writing is
//! deterministic for identical data, which is what makes same-seed reruns
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trackpipe_core::geometry::Track;
use trackpipe_core::pipeline::TimeBreakdown;
use trackpipe_core::refine::TrackCluster;
use trackpipe_core::tracker::LogisticScorer;
use trackpipe_core::tuner::{CurvePoint, DetectionCache, ProxyCache, ThetaBest};
use trackpipe_core::windows::WindowSizeSet;

use crate::errors::CliError;

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Parse { path: path.into(), source })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| CliError::Parse { path: path.into(), source })?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|source| CliError::Io { path: path.into(), source })?;
        }
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

/// Trained scorer with training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerFile {
    pub scorer: LogisticScorer,
    pub heldout_accuracy: f64,
    pub train_examples: usize,
    pub heldout_examples: usize,
}

/// Everything the tuning and execution phases need besides the datasets:
/// the best-accuracy configuration, the window-size set, refinement
/// references, and the measured caches. The spatial index is rebuilt from
/// the clusters on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachesFile {
    pub theta: ThetaBest,
    pub sizes: WindowSizeSet,
    pub clusters: Vec<TrackCluster>,
    pub index_cell: f64,
    pub detection: DetectionCache,
    pub proxy: ProxyCache,
}

/// Tuner output curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveFile {
    pub speedup: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipTracks {
    pub clip: u32,
    pub tracks: Vec<Track>,
}

/// Extracted tracks plus the simulated runtime report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracksFile {
    pub config_id: String,
    pub clip_duration: u32,
    pub clips: Vec<ClipTracks>,
    pub time: TimeBreakdown,
    pub total_time: f64,
}

impl TracksFile {
    /// Tracks indexed densely by clip; clips must be 0..n without gaps.
    pub fn tracks_per_clip(&self) -> Result<Vec<Vec<Track>>, CliError> {
        let mut out = vec![Vec::new(); self.clips.len()];
        for entry in &self.clips {
            let idx = entry.clip as usize;
            if idx >= out.len() {
                return Err(CliError::invalid(format!(
                    "tracks file clips are not contiguous: clip {} of {}",
                    entry.clip,
                    out.len()
                )));
            }
            out[idx] = entry.tracks.clone();
        }
        Ok(out)
    }
}

/// Record of a command invocation: seed, input paths, chosen config.
/// Written next to each primary output; `pipeline --manifest` replays one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    #[serde(default)]
    pub config_id: Option<String>,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { command: command.into(), seed, config_id: None, inputs: BTreeMap::new() }
    }

    pub fn input(mut self, key: &str, path: Option<&PathBuf>) -> Self {
        if let Some(p) = path {
            self.inputs.insert(key.into(), p.clone());
        }
        self
    }

    pub fn config(mut self, id: Option<String>) -> Self {
        self.config_id = id;
        self
    }

    /// Every referenced file must exist and parse as JSON.
    pub fn validate(&self) -> Result<(), CliError> {
        for (key, path) in &self.inputs {
            let bytes =
                fs::read(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            serde_json::from_slice::<serde_json::Value>(&bytes).map_err(|source| {
                CliError::Parse { path: path.clone(), source }
            })?;
            let _ = key;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&PathBuf, CliError> {
        self.inputs
            .get(key)
            .ok_or_else(|| CliError::missing(format!("manifest has no `{key}` input")))
    }

    /// Write the manifest next to the primary output.
    pub fn save_beside(&self, out: &Path) -> Result<(), CliError> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        save_json(&out.with_file_name(name), self)
    }
}
