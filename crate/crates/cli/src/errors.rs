//! Error classes mapped to distinct process exit codes.
//!
//! 0 success, 2 usage (clap), 3 I/O, 4 parse, 5 invalid input,
//! 6 missing prerequisite.

use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;
use trackpipe_core::cost::CostError;
use trackpipe_core::metrics::MetricsError;
use trackpipe_core::pipeline::PipelineError;
use trackpipe_core::refine::RefineError;
use trackpipe_core::sim::SceneError;
use trackpipe_core::tracker::{TrackerError, TrainingError};
use trackpipe_core::tuner::TunerError;
use trackpipe_core::windows::WindowsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing prerequisite: {0}")]
    MissingPrereq(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Io { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::Invalid(_) => 5,
            CliError::MissingPrereq(_) => 6,
        };
        ExitCode::from(code)
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        CliError::MissingPrereq(msg.into())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrackerError> for CliError {
    fn from(e: TrackerError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<RefineError> for CliError {
    fn from(e: RefineError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::NoUsableTracks => CliError::MissingPrereq(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        match e {
            CostError::MissingDetectCost { .. } | CostError::MissingProxyCost(_) => {
                CliError::MissingPrereq(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<WindowsError> for CliError {
    fn from(e: WindowsError) -> Self {
        match e {
            WindowsError::EmptyTrainingSet | WindowsError::MissingCachedLevel(_) => {
                CliError::MissingPrereq(e.to_string())
            }
            WindowsError::Cost(c) => c.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::MissingPrereq(e.to_string())
    }
}

impl From<TunerError> for CliError {
    fn from(e: TunerError) -> Self {
        CliError::MissingPrereq(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Cost(c) => c.into(),
            PipelineError::Windows(w) => w.into(),
            PipelineError::Metrics(m) => m.into(),
            PipelineError::MissingSizes
            | PipelineError::MissingScorer
            | PipelineError::UnknownProxyLevel(_) => CliError::MissingPrereq(e.to_string()),
            PipelineError::BadClip(_) => CliError::Invalid(e.to_string()),
        }
    }
}
