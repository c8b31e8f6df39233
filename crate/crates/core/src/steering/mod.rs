// SPDX-License-Identifier: MIT OR Apache-2.0

//! Relation-frame steering paths: every method maps (corrupt frame, clean
//! frame, α, seed) to replacement marker states.

pub mod frame;
pub mod methods;
pub mod paths;

pub use frame::{decompose_frame, RelationFrameCloud};
pub use methods::SteeringMethod;
pub use paths::{build_plan, HammingProvider, PatchPlan, PathInputs};
