//! Experiment orchestration, persistence and diagnostics behind the CLI.

pub mod config;
pub mod experiment;
pub mod feasibility;
pub mod record;
pub mod selftest;
pub mod stats;
pub mod validate;

pub use config::{Algorithm, EnvConfig, ExperimentConfig};
pub use experiment::{run_experiment, summary_path, write_records, write_summary, ExperimentOutput};
pub use feasibility::{feasibility_table, write_feasibility_csv, FeasibilityRow};
pub use record::{read_csv, write_csv, RunRecord, CSV_HEADER};
pub use selftest::{run_selftest, Check};
pub use stats::{summarize_by_episode, EpisodeSummary, Summary};
pub use validate::{diagnose, validate_file, Diagnostics};
