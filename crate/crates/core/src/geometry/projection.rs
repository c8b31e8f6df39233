// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::rng::{gaussian_matrix, seeded};
use crate::{Error, Matrix, Result};

/// Seeded Gaussian analysis projection `P` of shape `d x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub entries: Matrix,
    pub seed: u64,
    pub model_dim: usize,
    pub proj_dim: usize,
}

/// Hidden states mapped into the analysis space, `X = H P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedStates {
    pub coords: Matrix,
    pub layer: usize,
    pub prompt_id: usize,
}

/// Identifies a projection without carrying its entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionKey {
    pub model_dim: usize,
    pub proj_dim: usize,
    pub seed: u64,
}

pub fn make_projection(model_dim: usize, proj_dim: usize, seed: u64) -> Result<ProjectionMatrix> {
    if proj_dim == 0 {
        return Err(Error::InvalidArgument("projection dimension must be positive".into()));
    }
    if proj_dim > model_dim {
        return Err(Error::InvalidArgument(format!(
            "projection dimension {proj_dim} exceeds model dimension {model_dim}"
        )));
    }
    let mut rng = seeded(seed, 0);
    let scale = 1.0 / (proj_dim as f64).sqrt();
    let entries = gaussian_matrix(&mut rng, model_dim, proj_dim) * scale;
    Ok(ProjectionMatrix {
        entries,
        seed,
        model_dim,
        proj_dim,
    })
}

impl ProjectionMatrix {
    pub fn key(&self) -> ProjectionKey {
        ProjectionKey {
            model_dim: self.model_dim,
            proj_dim: self.proj_dim,
            seed: self.seed,
        }
    }
}

pub fn project_states(h: &Matrix, p: &ProjectionMatrix) -> Result<Matrix> {
    if h.ncols() != p.entries.nrows() {
        return Err(Error::Dimension(format!(
            "states have {} columns but projection has {} rows",
            h.ncols(),
            p.entries.nrows()
        )));
    }
    Ok(h * &p.entries)
}

impl ProjectedStates {
    pub fn new(h: &Matrix, p: &ProjectionMatrix, layer: usize, prompt_id: usize) -> Result<Self> {
        Ok(Self {
            coords: project_states(h, p)?,
            layer,
            prompt_id,
        })
    }
}
