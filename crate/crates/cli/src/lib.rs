//! Driver for minimizer uncertainty studies: configuration, the `check`,
//! `study` and `trajectory` commands, and their output files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{check, study, trajectory, CheckRow, StudyOutcome, TrajectoryOutcome};
pub use config::{ConfigFile, Overrides, ProblemKind, RunConfig};
