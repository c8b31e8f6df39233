// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::SymmetricEigen;

use crate::geometry::{ensure_finite, max_column_mean, orthonormality_error, thin_svd};
use crate::rng::{gaussian_matrix, seeded, Rng};
use crate::{Error, Matrix, Result};

const CENTER_TOL: f64 = 1e-9;
const PI_PLANE_TOL: f64 = 1e-12;

/// Solution of `min_R ‖A R - B‖_F` over orthogonal `R`.
///
/// The fit is carried out on `W = span(rows A ∪ rows B)`; `R` acts as the
/// identity on the orthogonal complement, which leaves the objective
/// unchanged. `orthogonal` is the unconstrained optimum; `rotation` is the
/// det +1 variant (identical unless `reflected`).
#[derive(Debug, Clone)]
pub struct Procrustes {
    pub basis: Matrix,
    pub orthogonal_small: Matrix,
    pub rotation_small: Matrix,
    pub reflected: bool,
    pub det: f64,
}

impl Procrustes {
    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    fn embed(&self, small: &Matrix) -> Matrix {
        let p = self.ambient();
        let w = self.basis.ncols();
        let delta = small - Matrix::identity(w, w);
        Matrix::identity(p, p) + &self.basis * delta * self.basis.transpose()
    }

    /// Full `p x p` orthogonal optimum.
    pub fn orthogonal(&self) -> Matrix {
        self.embed(&self.orthogonal_small)
    }

    /// Full `p x p` rotation-projected optimum.
    pub fn rotation(&self) -> Matrix {
        self.embed(&self.rotation_small)
    }

    /// `C · R^α` for the rotation variant, computed in the reduced space.
    pub fn apply_fraction(&self, c: &Matrix, alpha: f64) -> Result<Matrix> {
        if c.ncols() != self.ambient() {
            return Err(Error::Dimension(format!(
                "cloud has {} columns, rotation acts on {}",
                c.ncols(),
                self.ambient()
            )));
        }
        let w = self.basis.ncols();
        if w == 0 {
            return Ok(c.clone());
        }
        let frac = rotation_fraction(&self.rotation_small, alpha)?;
        let delta = frac - Matrix::identity(w, w);
        Ok(c + (c * &self.basis) * delta * self.basis.transpose())
    }
}

pub fn procrustes_rotation(a: &Matrix, b: &Matrix) -> Result<Procrustes> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "clouds have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    ensure_finite(a, "procrustes source")?;
    ensure_finite(b, "procrustes target")?;
    for m in [a, b] {
        let dev = max_column_mean(m);
        if dev > CENTER_TOL * (1.0 + m.abs().max()) {
            return Err(Error::NotCentered(dev));
        }
    }
    let (n, p) = a.shape();
    let mut stack = Matrix::zeros(2 * n, p);
    stack.rows_mut(0, n).copy_from(a);
    stack.rows_mut(n, n).copy_from(b);
    let f = thin_svd(&stack)?;
    let smax = f.s.iter().copied().fold(0.0, f64::max);
    let tol = smax * f64::EPSILON * (2 * n).max(p) as f64;
    let w = f.s.iter().filter(|&&s| s > tol && s > 0.0).count();
    let basis = f.v.columns(0, w).into_owned();
    if w == 0 {
        return Ok(Procrustes {
            basis,
            orthogonal_small: Matrix::zeros(0, 0),
            rotation_small: Matrix::zeros(0, 0),
            reflected: false,
            det: 1.0,
        });
    }
    let aw = a * &basis;
    let bw = b * &basis;
    let m = aw.transpose() * bw;
    let g = thin_svd(&m)?;
    let orthogonal_small = &g.u * g.v.transpose();
    let det = orthogonal_small.determinant();
    let sigma_min = g.s[w - 1];
    let sigma_tol = g.s[0].max(1.0) * 1e-12;
    let (rotation_small, reflected) = if det < 0.0 {
        let mut u = g.u.clone();
        u.column_mut(w - 1).neg_mut();
        (&u * g.v.transpose(), sigma_min > sigma_tol)
    } else {
        (orthogonal_small.clone(), false)
    };
    let orthogonal_small = if reflected { orthogonal_small } else { rotation_small.clone() };
    Ok(Procrustes {
        basis,
        orthogonal_small,
        rotation_small,
        reflected,
        det: if reflected { -1.0 } else { 1.0 },
    })
}

/// Fractional power `R^α` of a rotation.
///
/// With `K = (R + Rᵀ)/2` and `S = (R - Rᵀ)/2`, each eigenvector `v` of `K`
/// lies in a rotation plane of angle `θ = atan2(‖S v‖, λ)` and
/// `R^α = Σ cos(αθ) v vᵀ + Σ sin(αθ)/sin(θ) v vᵀ S`. Planes at exactly
/// `θ = π` carry no generator information in `S`; they are paired using an
/// orthonormal basis built from the standard basis vectors in index order.
pub fn rotation_fraction(r: &Matrix, alpha: f64) -> Result<Matrix> {
    let p = r.nrows();
    if r.ncols() != p {
        return Err(Error::Dimension(format!("rotation is {}x{}", p, r.ncols())));
    }
    ensure_finite(r, "rotation")?;
    let err = orthonormality_error(r);
    if err > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "matrix is not orthogonal (error {err:e})"
        )));
    }
    let det = r.determinant();
    if det < 0.0 {
        return Err(Error::Reflection(det));
    }
    if p == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let rt = r.transpose();
    let k = (r + &rt) * 0.5;
    let s = (r - &rt) * 0.5;
    let eig = SymmetricEigen::new(k);

    let mut cos_part = Matrix::zeros(p, p);
    let mut sin_weight = Matrix::zeros(p, p);
    let mut pi_vecs: Vec<usize> = Vec::new();
    for i in 0..p {
        let v = eig.eigenvectors.column(i);
        let lambda = eig.eigenvalues[i].clamp(-1.0, 1.0);
        let sin = (&s * v).norm();
        if sin < PI_PLANE_TOL && lambda < 0.0 {
            pi_vecs.push(i);
            continue;
        }
        let theta = sin.atan2(lambda);
        let c = (alpha * theta).cos();
        let g = if sin > 1e-300 {
            (alpha * theta).sin() / sin
        } else {
            alpha
        };
        let outer = v * v.transpose();
        cos_part += &outer * c;
        sin_weight += outer * g;
    }
    let mut out = cos_part + sin_weight * &s;

    if !pi_vecs.is_empty() {
        if pi_vecs.len() % 2 != 0 {
            return Err(Error::Degenerate(
                "odd-dimensional half-turn space in a proper rotation".into(),
            ));
        }
        let mut vp = Matrix::zeros(p, pi_vecs.len());
        for (j, &i) in pi_vecs.iter().enumerate() {
            vp.set_column(j, &eig.eigenvectors.column(i));
        }
        let proj = &vp * vp.transpose();
        let basis = lexicographic_basis(&proj, pi_vecs.len());
        let (sa, ca) = (alpha * std::f64::consts::PI).sin_cos();
        out += &proj * ca;
        for pair in basis.chunks(2) {
            let (b1, b2) = (&pair[0], &pair[1]);
            out += (b2 * b1.transpose() - b1 * b2.transpose()) * sa;
        }
    }
    Ok(out)
}

fn lexicographic_basis(proj: &Matrix, dim: usize) -> Vec<crate::Vector> {
    let p = proj.nrows();
    let mut basis: Vec<crate::Vector> = Vec::with_capacity(dim);
    for i in 0..p {
        if basis.len() == dim {
            break;
        }
        let mut v = proj.column(i).into_owned();
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
    }
    basis
}

/// Haar-distributed orthogonal matrix from the given generator.
pub fn haar_orthogonal_from(rng: &mut Rng, p: usize) -> Matrix {
    let g = gaussian_matrix(rng, p, p);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_orthogonal(p: usize, seed: u64) -> Matrix {
    haar_orthogonal_from(&mut seeded(seed, 0x4841_4152), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use proptest::prelude::*;

    fn centered(mut m: Matrix) -> Matrix {
        let n = m.nrows() as f64;
        for mut c in m.column_iter_mut() {
            let mean = c.sum() / n;
            c.add_scalar_mut(-mean);
        }
        m
    }

    fn planar(theta: f64) -> Matrix {
        let (s, c) = theta.sin_cos();
        Matrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn rotation_of_dim(p: usize, seed: u64) -> Matrix {
        let mut q = haar_orthogonal(p, seed);
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    #[test]
    fn identity_when_clouds_match() {
        let a = centered(gaussian_matrix(&mut seeded(1, 0), 7, 3));
        let f = procrustes_rotation(&a, &a).unwrap();
        assert!((f.orthogonal() - Matrix::identity(3, 3)).abs().max() < 1e-10);
        assert!(!f.reflected);
    }

    #[test]
    fn recovers_planted_rotation() {
        for seed in 0..20 {
            let a = centered(gaussian_matrix(&mut seeded(seed, 1), 10, 4));
            let q = rotation_of_dim(4, seed + 100);
            let b = &a * &q;
            let f = procrustes_rotation(&a, &b).unwrap();
            assert!((f.orthogonal() - &q).abs().max() < 1e-8);
        }
    }

    #[test]
    fn beats_random_orthogonal_candidates() {
        for seed in 0..5 {
            let a = centered(gaussian_matrix(&mut seeded(seed, 2), 6, 3));
            let b = centered(gaussian_matrix(&mut seeded(seed, 3), 6, 3));
            let r = procrustes_rotation(&a, &b).unwrap().orthogonal();
            let best = (&a * &r - &b).norm();
            let mut rng = seeded(seed, 4);
            for _ in 0..1000 {
                let q = haar_orthogonal_from(&mut rng, 3);
                assert!(best <= (&a * &q - &b).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn reflection_gets_rotation_variant() {
        let a = centered(gaussian_matrix(&mut seeded(8, 0), 9, 3));
        let mut refl = Matrix::identity(3, 3);
        refl[(2, 2)] = -1.0;
        let b = &a * &refl;
        let f = procrustes_rotation(&a, &b).unwrap();
        assert!(f.reflected);
        assert!(f.orthogonal().determinant() < 0.0);
        assert!((f.rotation().determinant() - 1.0).abs() < 1e-10);
        assert!((f.orthogonal() - refl).abs().max() < 1e-8);
    }

    #[test]
    fn rejects_uncentered() {
        let a = gaussian_matrix(&mut seeded(8, 0), 5, 3).add_scalar(3.0);
        assert!(matches!(
            procrustes_rotation(&a, &a),
            Err(Error::NotCentered(_))
        ));
    }

    #[test]
    fn wide_clouds_use_the_reduced_space() {
        let a = centered(gaussian_matrix(&mut seeded(2, 0), 6, 40));
        let q = rotation_of_dim(40, 77);
        let b = &a * &q;
        let f = procrustes_rotation(&a, &b).unwrap();
        assert!(f.basis.ncols() <= 10);
        assert!((&a * f.rotation() - &b).norm() < 1e-8);
        let half = f.apply_fraction(&a, 1.0).unwrap();
        assert!((half - &b).norm() < 1e-8);
        assert!(orthonormality_error(&f.rotation()) < 1e-10);
    }

    #[test]
    fn fraction_endpoints_and_half_angle() {
        let r = planar(1.2);
        assert!((rotation_fraction(&r, 0.0).unwrap() - Matrix::identity(2, 2)).abs().max() < 1e-12);
        assert!((rotation_fraction(&r, 1.0).unwrap() - &r).abs().max() < 1e-9);
        assert!((rotation_fraction(&r, 0.5).unwrap() - planar(0.6)).abs().max() < 1e-12);
    }

    #[test]
    fn fraction_of_half_turn_is_deterministic() {
        let r = planar(std::f64::consts::PI);
        let h = rotation_fraction(&r, 0.5).unwrap();
        assert!((&h * &h - &r).abs().max() < 1e-12);
        assert!((h - planar(std::f64::consts::FRAC_PI_2)).abs().max() < 1e-12);

        let mut r4 = Matrix::identity(4, 4) * -1.0;
        r4[(0, 0)] = -1.0;
        let h4 = rotation_fraction(&r4, 0.5).unwrap();
        assert!((&h4 * &h4 - &r4).abs().max() < 1e-12);
        assert!((rotation_fraction(&r4, 1.0).unwrap() - &r4).abs().max() < 1e-12);
    }

    #[test]
    fn fraction_rejects_reflection() {
        let mut r = Matrix::identity(3, 3);
        r[(1, 1)] = -1.0;
        assert!(matches!(rotation_fraction(&r, 0.5), Err(Error::Reflection(_))));
    }

    #[test]
    fn haar_is_orthogonal_and_deterministic() {
        let a = haar_orthogonal(6, 3);
        let b = haar_orthogonal(6, 3);
        assert_eq!(a, b);
        assert!((&a * a.transpose() - Matrix::identity(6, 6)).abs().max() < 1e-8);
    }

    #[test]
    fn haar_planar_angle_is_uniform() {
        let mut acc = 0.0;
        for seed in 0..500 {
            let q = haar_orthogonal(2, seed);
            acc += q[(0, 0)].clamp(-1.0, 1.0).acos().to_degrees();
        }
        let mean = acc / 500.0;
        assert!((mean - 90.0).abs() < 5.0, "mean angle {mean}");
    }

    proptest! {
        #[test]
        fn fraction_composes(seed in 0u64..300, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let r = rotation_of_dim(5, seed);
            let ra = rotation_fraction(&r, a).unwrap();
            let rb = rotation_fraction(&r, b).unwrap();
            let rab = rotation_fraction(&r, a + b).unwrap();
            prop_assert!((&ra * &rb - rab).abs().max() < 1e-8);
            prop_assert!(orthonormality_error(&ra) < 1e-9);
            prop_assert!((rotation_fraction(&r, 1.0).unwrap() - &r).abs().max() < 1e-9);
        }
    }
}
