// SPDX-License-Identifier: Apache-2.0

//! Configuration, experiment drivers and report emission for the CLI.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, EnvPreset, ExperimentConfig, Overrides};
pub use experiments::HarnessError;
