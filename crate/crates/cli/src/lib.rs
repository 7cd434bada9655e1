//! Scenario runner behind the `fblin` binary: TOML scenario files, the
//! open-loop, circle-tracking, stability-sweep and Hopf experiments, run
//! manifests and the stability-map plot.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod nmpe;
pub mod plot;

pub use commands::{execute, hopf_entries, validate_report, Command};
pub use config::{ExperimentKind, Overrides, ScenarioConfig};
pub use error::{CliError, Result};
pub use manifest::{RunManifest, MANIFEST_NAME};
pub use nmpe::{compute_nmpe, NmpeError};
