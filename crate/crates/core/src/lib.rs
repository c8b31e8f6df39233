// SPDX-License-Identifier: MIT OR Apache-2.0

//! Relation-rank geometry toolkit.
//!
//! Two halves share one object, the *relation frame*: the ordered set of
//! hidden states belonging to the tokens of a relation.
//!
//! - [`diagnostics`] scores frames by the sign entropy of row-selected
//!   determinant minors of the top-`k` left-singular token embedding, and
//!   compares true relation tuples against scrambled controls across ranks.
//! - [`steering`] moves a corrupt marker cloud toward a clean one along a
//!   family of paths (linear, shape, Procrustes, Grassmann, discrete, and
//!   matched placebos), and [`metrics`] measures how far behavior and
//!   residual geometry recover.
//!
//! Substrates live in [`harness`]: a planted-geometry generator with known
//! ground truth, a constructed glass-box relation network with patch hooks,
//! and ingestion of externally captured activations. [`runner`] wires the
//! suites together and writes CSVs plus a digest manifest.

pub mod banks;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod runner;
pub mod steering;

pub use error::{Error, Result};

/// Dense row-major-agnostic real matrix used for every hidden-state table.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
