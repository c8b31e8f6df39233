// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end suites, CSV artifacts and run manifests.

pub mod config;
pub mod diag;
pub mod manifest;
pub mod steer;
pub mod suites;
pub mod table;

pub use config::{DiagConfig, PlantedSubstrateConfig, SuiteConfig};
pub use diag::{diagnostic_cells, run_capture_ingest, run_diagnostic_suite, DiagPart};
pub use manifest::{RunManifest, RunOutputs, MANIFEST_FILE};
pub use steer::{run_steering, PathRow, SteerAudit, SteerConfig, SteeringRun};
pub use suites::{emit_plot_data, write_arity_bank, write_edge_grid_bank, run_site_order_audit, run_steering_suite, PATH_LONG_CSV, PATH_QUALITY_CSV, SITE_ORDER_CSV};
pub use table::Table;
