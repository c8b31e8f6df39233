// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;

use super::frame::{broadcast_add, RelationFrameCloud};
use super::methods::SteeringMethod::{self, *};
use crate::geometry::{
    aligned_target, grassmann_geodesic, grassmann_geodesic_rescaled, haar_orthogonal_from,
    orthonormal_basis, principal_angles, procrustes_rotation, thin_svd, OrthonormalBasis,
};
use crate::rng::{gaussian_matrix, label, seeded, stream_id, Rng};
use crate::{Error, Matrix, Result, Vector};

/// Replacement states for one (prompt, method, α).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPlan {
    pub method: SteeringMethod,
    pub alpha: f64,
    pub positions: Vec<usize>,
    pub replacement: Matrix,
    pub donor_prompt_id: Option<usize>,
}

/// Marker states at the frame positions for an intermediate grid whose
/// `switched` changed rows take their clean targets.
pub trait HammingProvider: Sync {
    fn changed_rows(&self) -> usize;
    fn states(&self, switched: &[usize]) -> Result<Matrix>;
}

pub struct PathInputs<'a> {
    pub corrupt: &'a RelationFrameCloud,
    pub clean: &'a RelationFrameCloud,
    pub donor_clean: Option<&'a RelationFrameCloud>,
    pub donor_corrupt: Option<&'a RelationFrameCloud>,
    pub donor_prompt_id: Option<usize>,
    /// Corrupt states at the scaffold sites used by the wrong-site control.
    pub wrong_sites: Option<&'a RelationFrameCloud>,
    pub hamming: Option<&'a dyn HammingProvider>,
    pub subspace_dim: usize,
    pub seed: u64,
}

impl<'a> PathInputs<'a> {
    pub fn new(corrupt: &'a RelationFrameCloud, clean: &'a RelationFrameCloud, subspace_dim: usize, seed: u64) -> Self {
        PathInputs {
            corrupt,
            clean,
            donor_clean: None,
            donor_corrupt: None,
            donor_prompt_id: None,
            wrong_sites: None,
            hamming: None,
            subspace_dim,
            seed,
        }
    }

    fn rng(&self, method: SteeringMethod) -> Rng {
        seeded(self.seed, stream_id(&[label(method.name())]))
    }
}

fn lerp(a: &Matrix, b: &Matrix, alpha: f64) -> Matrix {
    a * (1.0 - alpha) + b * alpha
}

fn lerp_vec(a: &Vector, b: &Vector, alpha: f64) -> Vector {
    a * (1.0 - alpha) + b * alpha
}

/// Top-`q` right singular directions of a centered cloud as a `d x q` basis.
fn top_basis(centered: &Matrix, q: usize) -> Result<OrthonormalBasis> {
    let m = centered.nrows();
    if q == 0 || q + 1 > m {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {q} needs 1 <= q <= m - 1 = {}",
            m.saturating_sub(1)
        )));
    }
    let f = thin_svd(centered)?;
    let s0 = f.s[0];
    if !(s0 > 0.0) || f.s[q - 1] <= 1e-10 * s0 {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension {q} exceeds the available rank of the cloud"
        )));
    }
    OrthonormalBasis::new(f.v.columns(0, q).into_owned())
}

fn spherical_rows(x0: &Matrix, x1: &Matrix, alpha: f64) -> Matrix {
    let mut out = Matrix::zeros(x0.nrows(), x0.ncols());
    for i in 0..x0.nrows() {
        let a = x0.row(i);
        let b = x1.row(i);
        let (na, nb) = (a.norm(), b.norm());
        let linear = a * (1.0 - alpha) + b * alpha;
        if na == 0.0 || nb == 0.0 {
            out.set_row(i, &linear);
            continue;
        }
        let (ua, ub) = (a / na, b / nb);
        let cos = ua.dot(&ub).clamp(-1.0, 1.0);
        let sin = (&ub - &ua * cos).norm();
        if sin < 1e-12 {
            out.set_row(i, &linear);
            continue;
        }
        let omega = sin.atan2(cos);
        let dir = &ua * (((1.0 - alpha) * omega).sin() / omega.sin())
            + &ub * ((alpha * omega).sin() / omega.sin());
        let norm = (1.0 - alpha) * na + alpha * nb;
        out.set_row(i, &(dir * norm));
    }
    out
}

/// Centered shape after moving the corrupt top-`q` subspace toward `target`.
///
/// `blend` carries the clean coordinates expressed on the aligned clean
/// basis; control variants pass `None` and keep the corrupt coordinates.
fn grassmann_shape(
    corrupt: &Matrix,
    q0: &OrthonormalBasis,
    target: &OrthonormalBasis,
    blend: Option<&Matrix>,
    alpha: f64,
    rescale_to: Option<f64>,
) -> Result<Matrix> {
    let (base, aligned) = aligned_target(q0, target)?;
    let path = match rescale_to {
        Some(angle) => grassmann_geodesic_rescaled(q0, target, alpha, angle)?,
        None => grassmann_geodesic(q0, target, alpha)?,
    };
    let residual = corrupt - corrupt * &q0.columns * q0.columns.transpose();
    let a0 = corrupt * &base;
    let coords = match blend {
        Some(clean) => lerp(&a0, &(clean * &aligned), alpha),
        None => a0,
    };
    Ok(coords * path.columns.transpose() + residual)
}

/// Basis path that moves column `j` of `Q0` toward column `j` of `Q1`.
fn basis_preserve_shape(corrupt: &Matrix, q0: &OrthonormalBasis, q1: &OrthonormalBasis, alpha: f64) -> Matrix {
    let mut target = q1.columns.clone();
    for j in 0..target.ncols() {
        if q0.columns.column(j).dot(&target.column(j)) < 0.0 {
            let neg = -target.column(j);
            target.set_column(j, &neg);
        }
    }
    let basis = orthonormal_basis(&lerp(&q0.columns, &target, alpha));
    let residual = corrupt - corrupt * &q0.columns * q0.columns.transpose();
    corrupt * &q0.columns * basis.transpose() + residual
}

fn seeded_order(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn require<'a>(v: Option<&'a RelationFrameCloud>, what: &str, like: &RelationFrameCloud) -> Result<&'a RelationFrameCloud> {
    let f = v.ok_or_else(|| Error::InvalidArgument(format!("method needs {what}")))?;
    if f.states.shape() != like.states.shape() {
        return Err(Error::Dimension(format!(
            "{what} has shape {:?}, frame has {:?}",
            f.states.shape(),
            like.states.shape()
        )));
    }
    Ok(f)
}

pub fn build_plan(method: SteeringMethod, inp: &PathInputs<'_>, alpha: f64) -> Result<PatchPlan> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let (c0, c1) = (inp.corrupt, inp.clean);
    if c0.states.shape() != c1.states.shape() || c0.positions != c1.positions {
        return Err(Error::Dimension(
            "clean and corrupt frames must share positions and shape".into(),
        ));
    }
    let (m, d) = c0.states.shape();
    let mu0 = &c0.centroid;
    let mu_a = lerp_vec(&c0.centroid, &c1.centroid, alpha);
    let mut rng = inp.rng(method);
    let mut positions = c0.positions.clone();
    let mut donor = None;

    let replacement = match method {
        LinearMarker => lerp(&c0.states, &c1.states, alpha),
        CentroidPlusShape => broadcast_add(&lerp(&c0.centered, &c1.centered, alpha), &mu_a),
        ShapeOnly => broadcast_add(&lerp(&c0.centered, &c1.centered, alpha), mu0),
        CentroidOnly => broadcast_add(&c0.centered, &mu_a),
        RandomCentroid => {
            let norm = (&c1.centroid - &c0.centroid).norm();
            let g = gaussian_matrix(&mut rng, 1, d);
            let gn = g.norm();
            let delta: Vector = if gn > 0.0 {
                g.row(0).transpose() * (norm / gn)
            } else {
                Vector::zeros(d)
            };
            broadcast_add(&c0.states, &(delta * alpha))
        }
        EqualNormNoise => {
            let target = (&c1.states - &c0.states).norm();
            let g = gaussian_matrix(&mut rng, m, d);
            let gn = g.norm();
            let noise = if gn > 0.0 { g * (target / gn) } else { g };
            &c0.states + noise * alpha
        }
        SphericalMarker => spherical_rows(&c0.states, &c1.states, alpha),
        EdgeDose => {
            let order = seeded_order(&mut rng, m);
            let n = ((alpha * m as f64) - 1e-9).ceil().max(0.0) as usize;
            let mut out = c0.states.clone();
            for &i in order.iter().take(n.min(m)) {
                out.set_row(i, &c1.states.row(i));
            }
            out
        }
        HammingPath => {
            let provider = inp
                .hamming
                .ok_or_else(|| Error::InvalidArgument("hamming_path needs an intermediate-map provider".into()))?;
            let h = provider.changed_rows();
            let order = seeded_order(&mut rng, h);
            let n = (alpha * h as f64).round() as usize;
            let states = provider.states(&order[..n.min(h)])?;
            if states.shape() != (m, d) {
                return Err(Error::Dimension("hamming provider returned a mis-shaped cloud".into()));
            }
            states
        }
        ShapePermSameSite => {
            let order = seeded_order(&mut rng, m);
            let permuted = Matrix::from_fn(m, d, |i, j| c1.centered[(order[i], j)]);
            broadcast_add(&lerp(&c0.centered, &permuted, alpha), mu0)
        }
        ShapeReflectionSameSite => {
            let f = thin_svd(&c1.centered)?;
            let v = f.v.column(0).into_owned();
            let reflected = &c1.centered - (&c1.centered * &v) * v.transpose() * 2.0;
            broadcast_add(&lerp(&c0.centered, &reflected, alpha), mu0)
        }
        ShapeCrossPromptSameSite | ShapeCrossPromptCorruptSameSite => {
            let (what, frame) = if method == ShapeCrossPromptSameSite {
                ("a donor clean frame", inp.donor_clean)
            } else {
                ("a donor corrupt frame", inp.donor_corrupt)
            };
            let f = require(frame, what, c0)?;
            donor = inp.donor_prompt_id;
            broadcast_add(&lerp(&c0.centered, &f.centered, alpha), mu0)
        }
        CleanDeltaWrongSite => {
            let f = require(inp.wrong_sites, "wrong-site states", c0)?;
            positions = f.positions.clone();
            if positions.iter().any(|p| c0.positions.contains(p)) {
                return Err(Error::InvalidArgument("wrong sites overlap the frame".into()));
            }
            &f.states + (&c1.states - &c0.states) * alpha
        }
        ProcrustesRotation | CentroidPlusRotation => {
            let fit = procrustes_rotation(&c0.centered, &c1.centered)?;
            let shape = fit.apply_fraction(&c0.centered, alpha)?;
            broadcast_add(&shape, if method == ProcrustesRotation { mu0 } else { &mu_a })
        }
        RandomRotation => {
            let h = haar_orthogonal_from(&mut rng, d);
            let fit = procrustes_rotation(&c0.centered, &(&c0.centered * h))?;
            broadcast_add(&fit.apply_fraction(&c0.centered, alpha)?, mu0)
        }
        GrassmannShape
        | CentroidPlusGrassmannShape
        | CentroidPlusGrassmannControl
        | GrassmannRotationOnly
        | GrassmannBasisPreserve
        | RandomGrassmann
        | RandomGrassmannMatched => {
            let q = inp.subspace_dim;
            let q0 = top_basis(&c0.centered, q)?;
            let mut random_target = || -> Result<OrthonormalBasis> {
                let g = gaussian_matrix(&mut rng, d, q);
                OrthonormalBasis::new(orthonormal_basis(&g))
            };
            let (shape, mu) = match method {
                GrassmannShape | CentroidPlusGrassmannShape => {
                    let q1 = top_basis(&c1.centered, q)?;
                    let s = grassmann_shape(&c0.centered, &q0, &q1, Some(&c1.centered), alpha, None)?;
                    (s, if method == GrassmannShape { mu0.clone() } else { mu_a.clone() })
                }
                CentroidPlusGrassmannControl | GrassmannRotationOnly => {
                    let q1 = top_basis(&c1.centered, q)?;
                    let s = grassmann_shape(&c0.centered, &q0, &q1, None, alpha, None)?;
                    (s, if method == GrassmannRotationOnly { mu0.clone() } else { mu_a.clone() })
                }
                GrassmannBasisPreserve => {
                    let q1 = top_basis(&c1.centered, q)?;
                    (basis_preserve_shape(&c0.centered, &q0, &q1, alpha), mu0.clone())
                }
                RandomGrassmann => {
                    let t = random_target()?;
                    (grassmann_shape(&c0.centered, &q0, &t, None, alpha, None)?, mu0.clone())
                }
                _ => {
                    let q1 = top_basis(&c1.centered, q)?;
                    let scale = principal_angles(&q0.columns, &q1.columns)?
                        .into_iter()
                        .fold(0.0, f64::max);
                    let t = random_target()?;
                    (grassmann_shape(&c0.centered, &q0, &t, None, alpha, Some(scale))?, mu0.clone())
                }
            };
            broadcast_add(&shape, &mu)
        }
    };
    crate::geometry::ensure_finite(&replacement, "replacement states")?;
    Ok(PatchPlan {
        method,
        alpha,
        positions,
        replacement,
        donor_prompt_id: donor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;
    use crate::steering::decompose_frame;

    fn frames(seed: u64, m: usize, d: usize) -> (RelationFrameCloud, RelationFrameCloud) {
        let mut rng = seeded(seed, 9);
        let a = gaussian_matrix(&mut rng, m, d);
        let b = gaussian_matrix(&mut rng, m, d);
        (
            decompose_frame((0..m).collect(), a).unwrap(),
            decompose_frame((0..m).collect(), b).unwrap(),
        )
    }

    #[test]
    fn spherical_interpolates_norm_linearly() {
        let x0 = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let x1 = Matrix::from_row_slice(1, 2, &[0.0, 3.0]);
        let mid = spherical_rows(&x0, &x1, 0.5);
        assert!((mid.row(0).norm() - 2.0).abs() < 1e-12);
        assert!((mid[(0, 0)] - mid[(0, 1)]).abs() < 1e-12);
        let anti = spherical_rows(&x0, &(-&x0), 0.25);
        assert!((anti[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn q_above_rank_is_an_error() {
        let (a, b) = frames(1, 6, 10);
        let inp = PathInputs::new(&a, &b, 6, 0);
        assert!(build_plan(GrassmannShape, &inp, 0.5).is_err());
        let rank_one = decompose_frame(
            (0..4).collect(),
            Matrix::from_fn(4, 5, |i, j| (i as f64) * (j as f64 + 1.0)),
        )
        .unwrap();
        let inp = PathInputs::new(&rank_one, &b, 2, 0).clone_with(&rank_one);
        assert!(build_plan(GrassmannShape, &inp, 0.5).is_err());
    }

    impl<'a> PathInputs<'a> {
        fn clone_with(self, clean: &'a RelationFrameCloud) -> Self {
            PathInputs { clean, ..self }
        }
    }

    #[test]
    fn missing_inputs_are_reported() {
        let (a, b) = frames(2, 6, 10);
        let inp = PathInputs::new(&a, &b, 2, 0);
        assert!(build_plan(HammingPath, &inp, 0.5).is_err());
        assert!(build_plan(ShapeCrossPromptSameSite, &inp, 0.5).is_err());
        assert!(build_plan(CleanDeltaWrongSite, &inp, 0.5).is_err());
        assert!(build_plan(LinearMarker, &inp, 1.5).is_err());
    }

    #[test]
    fn edge_dose_counts() {
        let (a, b) = frames(3, 16, 4);
        let inp = PathInputs::new(&a, &b, 2, 5);
        for (alpha, want) in [(0.0, 0), (0.05, 1), (0.25, 4), (0.5, 8), (0.55, 9), (1.0, 16)] {
            let p = build_plan(EdgeDose, &inp, alpha).unwrap();
            let switched = (0..16)
                .filter(|&i| p.replacement.row(i) == b.states.row(i))
                .count();
            assert_eq!(switched, want, "alpha {alpha}");
        }
    }

    #[test]
    fn random_controls_depend_on_seed() {
        let (a, b) = frames(4, 8, 12);
        let p1 = build_plan(RandomRotation, &PathInputs::new(&a, &b, 3, 1), 1.0).unwrap();
        let p2 = build_plan(RandomRotation, &PathInputs::new(&a, &b, 3, 2), 1.0).unwrap();
        assert!((&p1.replacement - &p2.replacement).norm() > 1e-3);
        let n1 = (&p1.replacement - broadcast_add(&Matrix::zeros(8, 12), &a.centroid)).norm();
        let n2 = (&p2.replacement - broadcast_add(&Matrix::zeros(8, 12), &a.centroid)).norm();
        assert!((n1 - n2).abs() < 1e-9);
        let again = build_plan(RandomRotation, &PathInputs::new(&a, &b, 3, 1), 1.0).unwrap();
        assert_eq!(p1, again);
    }
}
