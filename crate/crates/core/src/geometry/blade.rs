// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::{Error, Result, Vector};

/// Strictly-upper coefficients of `u ∧ v`, pairs `(i, j)` with `i < j`
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Blade2Vector {
    pub coeffs: Vector,
    pub normalized: bool,
}

/// Unnormalized wedge coefficients.
pub fn wedge(u: &[f64], v: &[f64]) -> Result<Vector> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "blade inputs have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let p = u.len();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            out.push(u[i] * v[j] - u[j] * v[i]);
        }
    }
    Ok(Vector::from_vec(out))
}

pub fn blade2(u: &[f64], v: &[f64]) -> Result<Blade2Vector> {
    let coeffs = wedge(u, v)?;
    let norm = coeffs.norm();
    if norm > 0.0 {
        Ok(Blade2Vector {
            coeffs: coeffs / norm,
            normalized: true,
        })
    } else {
        Ok(Blade2Vector {
            coeffs: Vector::zeros(coeffs.len()),
            normalized: false,
        })
    }
}
