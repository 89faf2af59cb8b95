//! File formats, run directories, a threaded executor and the `flipper`
//! command-line driver around `flipper-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod exec;
pub mod io;
pub mod manifest;

use std::path::PathBuf;

use flipper_core::cgan::CganError;
use flipper_core::pipeline::PipelineError;
use flipper_core::planner::PlanError;
use flipper_core::policy::PolicyError;
use flipper_core::terrain::TerrainError;
use thiserror::Error;

pub use flipper_core as core;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("missing artifact: {0}")]
    Missing(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 1 for domain failures, 2 for usage, config and missing-input errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Missing(_) | Error::Config(_) => 2,
            Error::Pipeline(e) if is_config_error(e) => 2,
            _ => 1,
        }
    }
}

fn is_config_error(e: &PipelineError) -> bool {
    matches!(
        e,
        PipelineError::Config(_)
            | PipelineError::Terrain(TerrainError::InvalidSpec(_))
            | PipelineError::Plan(PlanError::Config(_))
            | PipelineError::Policy(PolicyError::Hyper(_))
            | PipelineError::Cgan(CganError::Hyper(_))
    )
}

macro_rules! pipeline_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Pipeline(e.into())
            }
        }
    )*};
}

pipeline_from!(TerrainError, PlanError, PolicyError, CganError, flipper_core::sim::SimError);

impl From<flipper_core::nnkit::NnError> for Error {
    fn from(e: flipper_core::nnkit::NnError) -> Self {
        Error::Pipeline(PipelineError::Policy(e.into()))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
