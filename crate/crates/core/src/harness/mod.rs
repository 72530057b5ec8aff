//! CLI-facing machinery: dataset ingestion, experiment configuration, chain
//! orchestration, and CSV metric emission.

pub mod config;
pub mod experiment;
pub mod idx;
pub mod libsvm;
pub mod projection;

pub use config::{DatasetSource, ExperimentConfig, ModelConfig, ProjectionConfig, DATA_DIR_ENV};
pub use experiment::{prepare, run_experiment, CellResult, EvalContext, PreparedExperiment};
pub use idx::load_idx;
pub use libsvm::load_libsvm;
pub use projection::random_projection;
