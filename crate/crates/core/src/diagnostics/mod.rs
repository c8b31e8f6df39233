// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sign-entropy statistics over tuple minors: per-prompt rank cells, rank
//! profiles, constructor margins, layer sweeps and the parity-split
//! held-out audit.

pub mod bootstrap;
pub mod cells;
pub mod profile;

pub use bootstrap::{bootstrap_ci, BootstrapCI};
pub use cells::{compute_cells, prompt_rank_cell, rank_cell_from_factors, ArityStates, CellConfig, RankCell, TupleSets};
pub use profile::{
    aggregate_profile, best_layers, constructor_margin, heldout_audit, layer_sweep, BootConfig, HeldOutReport,
    MarginRow, ProfileEntry, RankProfile, SweepResult,
};
