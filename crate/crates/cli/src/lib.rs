//! Scenario files, runs and manifests for the `wsdirac` command.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod manifest;
pub mod run;
pub mod scenarios;

pub use config::ScenarioConfig;
pub use error::{CliError, Result};
pub use manifest::{verify, RunManifest};
pub use run::{run_scenario, simulate, Outcome};
pub use scenarios::{list_scenarios, resolve};

/// Process exit status: all tolerances met.
pub const EXIT_PASS: i32 = 0;
/// Execution error.
pub const EXIT_ERROR: i32 = 1;
/// A scientific tolerance or a manifest check failed.
pub const EXIT_FAIL: i32 = 2;
