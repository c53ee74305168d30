//! Command-line driver and file formats for the dotfield electrostatics
//! solver: TOML device configs, CSV/VTK export, run manifests and the
//! built-in manufactured-solution convergence cases.

pub mod args;
pub mod cases;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;
