// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::geometry::ensure_finite;
use crate::{Matrix, Result, Vector};

/// Thin SVD `X = U diag(S) Vᵀ` with `m = min(n, p)` retained components.
///
/// Columns are ordered by non-increasing singular value and each `U`
/// column is signed so that its largest-magnitude entry is non-negative
/// (lowest row index wins ties); the matching `V` column is flipped with it.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vector,
    pub v: Matrix,
}

/// Name of the sign convention, recorded in manifests.
pub const SVD_CONVENTION: &str =
    "nalgebra bidiagonal SVD; columns sorted by non-increasing singular value; each U column signed so its largest-magnitude entry is non-negative (lowest row index on ties), V flipped to match";

pub fn thin_svd(x: &Matrix) -> Result<SvdFactors> {
    ensure_finite(x, "matrix passed to thin_svd")?;
    let (n, p) = x.shape();
    let m = n.min(p);
    if m == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(n, 0),
            s: Vector::zeros(0),
            v: Matrix::zeros(p, 0),
        });
    }
    let svd = x.clone().svd(true, true);
    let u_raw = svd.u.expect("u requested");
    let v_raw = svd.v_t.expect("v_t requested").transpose();
    let s_raw = svd.singular_values;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));

    let mut u = Matrix::zeros(n, m);
    let mut v = Matrix::zeros(p, m);
    let mut s = Vector::zeros(m);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = s_raw[src].max(0.0);
        let flip = sign_flip_for(u_raw.column(src).iter().copied());
        for i in 0..n {
            u[(i, dst)] = flip * u_raw[(i, src)];
        }
        for i in 0..p {
            v[(i, dst)] = flip * v_raw[(i, src)];
        }
    }
    Ok(SvdFactors { u, s, v })
}

fn sign_flip_for(col: impl Iterator<Item = f64>) -> f64 {
    let mut best = 0.0f64;
    let mut best_val = 0.0f64;
    for v in col {
        if v.abs() > best {
            best = v.abs();
            best_val = v;
        }
    }
    if best_val < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.s) * self.v.transpose()
    }

    /// Number of retained components `m`.
    pub fn rank_capacity(&self) -> usize {
        self.s.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orthonormality_error;
    use crate::rng::{gaussian_matrix, seeded};

    #[test]
    fn diagonal_case() {
        let x = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let f = thin_svd(&x).unwrap();
        assert_eq!(f.s.as_slice(), &[3.0, 1.0]);
        assert!((f.u.clone() - Matrix::identity(2, 2)).abs().max() < 1e-15);
        assert!((f.v.clone() - Matrix::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn zero_matrix_reconstructs_exactly() {
        let x = Matrix::zeros(4, 3);
        let f = thin_svd(&x).unwrap();
        assert!(f.s.iter().all(|&s| s == 0.0));
        assert!(orthonormality_error(&f.u) < 1e-8);
        assert!(f.reconstruct().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_reconstruction_and_convention() {
        let mut rng = seeded(3, 0);
        for (n, p) in [(12, 5), (5, 12), (7, 7)] {
            let x = gaussian_matrix(&mut rng, n, p);
            let f = thin_svd(&x).unwrap();
            let rel = (f.reconstruct() - &x).norm() / x.norm();
            assert!(rel < 1e-6, "rel {rel}");
            assert!(orthonormality_error(&f.u) < 1e-8);
            assert!(orthonormality_error(&f.v) < 1e-8);
            for w in f.s.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
            for c in f.u.column_iter() {
                let (mut best, mut at) = (0.0f64, 0.0f64);
                for &v in c.iter() {
                    if v.abs() > best {
                        best = v.abs();
                        at = v;
                    }
                }
                assert!(at >= 0.0);
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = Matrix::zeros(2, 2);
        x[(0, 1)] = f64::NAN;
        assert!(thin_svd(&x).is_err());
    }
}
