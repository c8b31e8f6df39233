// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic prompt banks over a closed synthetic vocabulary.

pub mod arity;
pub mod edge_grid;
pub mod serialization;
pub mod tuples;
pub mod vocab;

pub use arity::{gen_arity_bank, ArityBank, ArityBankConfig, Constructor, ControlledArityPrompt, RelationInstance};
pub use edge_grid::{
    changed_edges, gen_edge_grid_bank, render_prompt, ChangedEdgeSet, EdgeGridBank, EdgeGridConfig,
    EdgeGridPrompt, OptionKind, Which,
};
pub use tuples::{enumerate_tuples, random_tuples, scrambled_tuples, Selector, TupleSet};
pub use vocab::{TokenId, Vocab};
