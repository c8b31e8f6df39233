// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation substrates: the planted-geometry generator, the constructed
//! glass-box network and ingestion of externally captured states.

pub mod glassbox;
pub mod interchange;
pub mod planted;

pub use glassbox::{
    argmax_kind, base_traces, competence_from_traces, competence_gate, logit_gap, logits_by_kind, option_probs,
    BaseTraces, CompetenceReport, ForwardTrace, GlassBox, GlassBoxConfig, GridLayout, DEFAULT_GATE_THRESHOLD,
};
pub use planted::{planted_states, PlantedBankConfig, PlantedSubstrate};
pub use interchange::{decode_tensor, encode_tensor, ingest, write_capture, CaptureFile, CaptureManifest, IngestedStates};
