// SPDX-License-Identifier: MIT OR Apache-2.0

//! Behavior, residual-geometry and edge-orientation recovery readouts.

pub mod edge;
pub mod recovery;
pub mod residual;
pub mod summary;

pub use edge::{edge_plucker_recovery, edge_plucker_scalar, EdgePluckerTriple, EdgePluckerValue};
pub use recovery::{
    alpha_grid, behavior_recovery, coupled_auc, off_target_auc, residual_recovery, trapezoid,
    LogitGapTriple, RecoveryCurve, ResidualVectorTriple, EPS_GAP,
};
pub use residual::{residual_blade_vector, residual_blade_vector_projected};
pub use summary::{pearson, summarize_method, PathQualityRow, PromptCurve};
