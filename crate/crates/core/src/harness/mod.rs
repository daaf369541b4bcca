//! Configuration-driven pipeline behind the command-line tool.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::ProjectConfig;
pub use manifest::Manifest;
pub use pipeline::{
    build_model, experiment_command, invert_command, leadfield_command, mesh_command,
    metrics_command, simulate_command, Experiment, Model, Truth,
};
