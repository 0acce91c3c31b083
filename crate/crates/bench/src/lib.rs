//! Monte-Carlo evaluation of the SDC set-membership filter: plant
//! simulation under bounded noise, error metrics, CSV/JSON artifacts.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod simulate;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, run_seed, ExperimentSummary, SeedRun};
pub use metrics::{compute_metrics, AggregateMetrics, RunMetrics};
pub use simulate::{simulate_plant, NoiseSpec, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("noise exceeds its declared bound: {0}")]
    NoiseExceedsBound(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Filter(#[from] smf_core::SmfError),
}
