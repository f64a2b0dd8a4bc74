//! Fairness of uncertainty estimates across two population subgroups.
//!
//! Monte-Carlo predictions (ensemble dropout samples) are reduced to a
//! per-instance uncertainty, normalized to `[0, 100]`, and swept over a
//! grid of thresholds. At each threshold the retained predictions are
//! scored per subgroup and the fairness gap `|EM(D0) - EM(D1)|` is
//! recorded. A small trainer, synthetic data generators and a report
//! writer close the loop so the whole pipeline runs on a laptop.

pub mod cli;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod synth;
pub mod tensor;
pub mod toy;
pub mod uncertainty;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Uncertainty(#[from] uncertainty::UncertaintyError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Sweep(#[from] sweep::SweepError),
    #[error(transparent)]
    Toy(#[from] toy::ToyError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure came from the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Manifest(e) => e.is_io(),
            Error::Tensor(tensor::TensorError::Io { .. }) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
