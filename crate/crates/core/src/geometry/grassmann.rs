// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::geometry::{orthonormality_error, thin_svd};
use crate::{Error, Matrix, Result, Vector};

/// `p x q` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    pub columns: Matrix,
}

const SIN_FLOOR: f64 = 1e-10;

impl OrthonormalBasis {
    pub fn new(columns: Matrix) -> Result<Self> {
        let err = orthonormality_error(&columns);
        if err > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "basis columns are not orthonormal (error {err:e})"
            )));
        }
        Ok(Self { columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.columns.nrows()
    }
}

/// Orthonormal basis of the column span of `m` via thin QR.
pub fn orthonormal_basis(m: &Matrix) -> Matrix {
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q.columns(0, m.ncols().min(m.nrows())).into_owned();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

struct Alignment {
    y: Matrix,
    z: Matrix,
    cos: Vector,
    sin: Vector,
    w_raw: Matrix,
}

fn align(qa: &Matrix, qb: &Matrix) -> Result<Alignment> {
    if qa.shape() != qb.shape() {
        return Err(Error::Dimension(format!(
            "subspace bases have shapes {:?} and {:?}",
            qa.shape(),
            qb.shape()
        )));
    }
    let q = qa.ncols();
    let f = thin_svd(&(qa.transpose() * qb))?;
    let y = f.u;
    let z = f.v;
    let cos = f.s.map(|c| c.min(1.0));
    let qb_z = qb * &z;
    let w_raw = &qb_z - qa * &y * Matrix::from_diagonal(&cos);
    let sin = Vector::from_iterator(q, w_raw.column_iter().map(|c| c.norm()));
    Ok(Alignment {
        y,
        z,
        cos,
        sin,
        w_raw,
    })
}

/// Principal angles between the spans of two orthonormal bases, ascending.
///
/// Each angle is `atan2(sin, cos)` with the sine read off the component of
/// the aligned second basis orthogonal to the first, which stays accurate
/// near zero where `acos` of the cosine loses half the digits.
pub fn principal_angles(qa: &Matrix, qb: &Matrix) -> Result<Vec<f64>> {
    let a = align(qa, qb)?;
    let mut out: Vec<f64> = (0..a.cos.len())
        .map(|j| a.sin[j].atan2(a.cos[j]))
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Point at fraction `alpha` along the geodesic from `span(Q0)` to `span(Q1)`.
///
/// With `Q0ᵀQ1 = Y cos(Θ) Zᵀ` and `W = (Q1 Z - Q0 Y cos Θ) / sin Θ`, the
/// path is `Q0 Y cos(αΘ) + W sin(αΘ)`, which equals `Q1 Z` at `α = 1`.
pub fn grassmann_geodesic(
    q0: &OrthonormalBasis,
    q1: &OrthonormalBasis,
    alpha: f64,
) -> Result<OrthonormalBasis> {
    let a = align(&q0.columns, &q1.columns)?;
    let base = &q0.columns * &a.y;
    let q = base.ncols();
    let mut out = Matrix::zeros(base.nrows(), q);
    for j in 0..q {
        let theta = a.sin[j].atan2(a.cos[j]);
        let (s, c) = (alpha * theta).sin_cos();
        let mut col = base.column(j) * c;
        if a.sin[j] > SIN_FLOOR {
            col += a.w_raw.column(j) * (s / a.sin[j]);
        }
        out.set_column(j, &col);
    }
    Ok(OrthonormalBasis { columns: out })
}

/// Geodesic aligned-endpoint basis `Q1 Z`, which the path reaches at `α = 1`.
pub fn aligned_target(q0: &OrthonormalBasis, q1: &OrthonormalBasis) -> Result<(Matrix, Matrix)> {
    let a = align(&q0.columns, &q1.columns)?;
    Ok((&q0.columns * &a.y, &q1.columns * &a.z))
}

/// Geodesic from `Q0` in the direction of `Q1` with every principal angle
/// rescaled so the largest equals `target_max_angle`.
pub fn grassmann_geodesic_rescaled(
    q0: &OrthonormalBasis,
    q1: &OrthonormalBasis,
    alpha: f64,
    target_max_angle: f64,
) -> Result<OrthonormalBasis> {
    let a = align(&q0.columns, &q1.columns)?;
    let thetas: Vec<f64> = (0..a.cos.len())
        .map(|j| a.sin[j].atan2(a.cos[j]))
        .collect();
    let max = thetas.iter().copied().fold(0.0, f64::max);
    let scale = if max > SIN_FLOOR { target_max_angle / max } else { 0.0 };
    let base = &q0.columns * &a.y;
    let mut out = Matrix::zeros(base.nrows(), base.ncols());
    for (j, &theta) in thetas.iter().enumerate() {
        let (s, c) = (alpha * theta * scale).sin_cos();
        let mut col = base.column(j) * c;
        if a.sin[j] > SIN_FLOOR {
            col += a.w_raw.column(j) * (s / a.sin[j]);
        }
        out.set_column(j, &col);
    }
    Ok(OrthonormalBasis { columns: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use proptest::prelude::*;

    fn line(theta: f64) -> OrthonormalBasis {
        OrthonormalBasis::new(Matrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()])).unwrap()
    }

    fn random_basis(seed: u64, p: usize, q: usize) -> OrthonormalBasis {
        let mut rng = seeded(seed, 9);
        OrthonormalBasis::new(orthonormal_basis(&gaussian_matrix(&mut rng, p, q))).unwrap()
    }

    #[test]
    fn half_angle_in_the_plane() {
        let theta = 1.1;
        let mid = grassmann_geodesic(&line(0.0), &line(theta), 0.5).unwrap();
        let oracle = line(theta / 2.0).columns;
        let ang = principal_angles(&mid.columns, &oracle).unwrap();
        assert!(ang[0] < 1e-8, "{ang:?}");
        let cos = (mid.columns.transpose() * &oracle)[(0, 0)].abs();
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_subspace_is_constant_path() {
        let q0 = random_basis(1, 10, 3);
        let rot = orthonormal_basis(&gaussian_matrix(&mut seeded(2, 0), 3, 3));
        let q1 = OrthonormalBasis::new(&q0.columns * rot).unwrap();
        let ang = principal_angles(&q0.columns, &q1.columns).unwrap();
        assert!(ang.iter().all(|&a| a < 1e-8));
        for alpha in [0.0, 0.3, 1.0] {
            let g = grassmann_geodesic(&q0, &q1, alpha).unwrap();
            let a = principal_angles(&g.columns, &q0.columns).unwrap();
            assert!(a.iter().all(|&t| t < 1e-8));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = random_basis(1, 6, 2);
        let b = random_basis(2, 6, 3);
        assert!(grassmann_geodesic(&a, &b, 0.5).is_err());
    }

    #[test]
    fn rescaled_path_has_target_angle() {
        let q0 = random_basis(4, 12, 3);
        let q1 = random_basis(5, 12, 3);
        let g = grassmann_geodesic_rescaled(&q0, &q1, 1.0, 0.25).unwrap();
        let a = principal_angles(&q0.columns, &g.columns).unwrap();
        assert!((a[2] - 0.25).abs() < 1e-9, "{a:?}");
    }

    proptest! {
        #[test]
        fn endpoints_are_exact(seed in 0u64..500, q in 1usize..5) {
            let q0 = random_basis(seed, 9, q);
            let q1 = random_basis(seed + 1000, 9, q);
            let g0 = grassmann_geodesic(&q0, &q1, 0.0).unwrap();
            let g1 = grassmann_geodesic(&q0, &q1, 1.0).unwrap();
            for t in principal_angles(&g0.columns, &q0.columns).unwrap() {
                prop_assert!(t < 1e-8);
            }
            for t in principal_angles(&g1.columns, &q1.columns).unwrap() {
                prop_assert!(t < 1e-8);
            }
            let mid = grassmann_geodesic(&q0, &q1, 0.4).unwrap();
            prop_assert!(orthonormality_error(&mid.columns) < 1e-8);
        }
    }
}
