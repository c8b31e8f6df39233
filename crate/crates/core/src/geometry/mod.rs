// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic numerical primitives shared by the diagnostic and steering
//! halves of the toolkit.

pub mod blade;
pub mod grassmann;
pub mod minors;
pub mod procrustes;
pub mod projection;
pub mod svd;

pub use blade::{blade2, Blade2Vector};
pub use grassmann::{
    aligned_target, grassmann_geodesic, grassmann_geodesic_rescaled, orthonormal_basis,
    principal_angles, OrthonormalBasis,
};
pub use minors::{
    binary_entropy_counts, minor_det, minor_sign, sign_entropy, validate_tuple, Entropy, MinorSign,
};
pub use procrustes::{
    haar_orthogonal, haar_orthogonal_from, procrustes_rotation, rotation_fraction, Procrustes,
};
pub use projection::{make_projection, project_states, ProjectedStates, ProjectionMatrix};
pub use svd::{thin_svd, SvdFactors};

use crate::{Error, Matrix, Result};

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Largest absolute column mean of `m`.
pub fn max_column_mean(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| (c.sum() / n).abs())
        .fold(0.0, f64::max)
}

/// Max-abs deviation of `QᵀQ` from the identity.
pub fn orthonormality_error(q: &Matrix) -> f64 {
    let g = q.transpose() * q;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
