//! Configuration, checkpoints, metrics files and the staged pipeline behind
//! the `lsg` binary.

mod checkpoint;
mod commands;
mod config;
mod metrics;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use commands::{
    analyze_graph, connectivity_probability, eval, gen_data, load_population, population_checkpoint, pretrain,
    train, ArtifactPaths, EvalSummary, TrainSummary,
};
pub use config::{parse_config, RunConfig, DEFAULT_PRETRAIN_EPOCHS};
pub use metrics::{metrics_csv, plot_csv, MetricsRow, Phase, METRICS_HEADER, METRICS_VERSION};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::learning::LearningError;
use crate::population::PopulationError;
use crate::shapes::ShapesError;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 0 when the offending value came from a default.
    #[error("line {line}: {key}: {message}")]
    Config { line: usize, key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path} not found; run `lsg {producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Shapes(#[from] ShapesError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// Short machine-readable category for the one-line error report.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::MissingArtifact { .. } => "missing-artifact",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Data(_) | CliError::Shapes(_) => "data",
            CliError::Population(_) | CliError::Learning(_) => "training",
        }
    }
}
