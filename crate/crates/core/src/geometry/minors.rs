// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::geometry::SvdFactors;
use crate::{Error, Matrix, Result};

/// Orientation sign of one selected `k x k` minor of `U_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MinorSign {
    Neg,
    Zero,
    Pos,
}

impl MinorSign {
    pub fn from_det(det: f64) -> Self {
        if det > 0.0 {
            MinorSign::Pos
        } else if det < 0.0 {
            MinorSign::Neg
        } else {
            MinorSign::Zero
        }
    }

    pub fn value(self) -> i8 {
        match self {
            MinorSign::Neg => -1,
            MinorSign::Zero => 0,
            MinorSign::Pos => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            MinorSign::Neg => MinorSign::Pos,
            MinorSign::Zero => MinorSign::Zero,
            MinorSign::Pos => MinorSign::Neg,
        }
    }
}

/// Sign entropy in bits, or `Undefined` when every minor was exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Entropy {
    Bits(f64),
    Undefined,
}

impl Entropy {
    pub fn bits(self) -> Option<f64> {
        match self {
            Entropy::Bits(b) => Some(b),
            Entropy::Undefined => None,
        }
    }
}

/// Check a tuple against `n` rows: in range and free of repeats.
pub fn validate_tuple(tuple: &[usize], n: usize) -> Result<()> {
    for (i, &t) in tuple.iter().enumerate() {
        if t >= n {
            return Err(Error::OutOfRange { index: t, len: n });
        }
        if tuple[..i].contains(&t) {
            return Err(Error::DuplicateIndex(t));
        }
    }
    Ok(())
}

/// Determinant of the minor formed by rows `tuple` of the first `k`
/// columns of `u`.
pub fn minor_det(u: &Matrix, tuple: &[usize], k: usize) -> Result<f64> {
    if tuple.len() != k {
        return Err(Error::InvalidArgument(format!(
            "tuple length {} does not equal rank {k}",
            tuple.len()
        )));
    }
    if k == 0 || k > u.ncols() {
        return Err(Error::InvalidArgument(format!(
            "rank {k} outside 1..={}",
            u.ncols()
        )));
    }
    validate_tuple(tuple, u.nrows())?;
    let mut m = Matrix::zeros(k, k);
    for (r, &row) in tuple.iter().enumerate() {
        for c in 0..k {
            m[(r, c)] = u[(row, c)];
        }
    }
    Ok(m.determinant())
}

pub fn minor_sign(f: &SvdFactors, tuple: &[usize], k: usize) -> Result<MinorSign> {
    minor_det(&f.u, tuple, k).map(MinorSign::from_det)
}

/// Binary entropy of the nonzero signs, exact zeros dropped first.
pub fn sign_entropy(signs: &[MinorSign]) -> Entropy {
    let pos = signs.iter().filter(|s| **s == MinorSign::Pos).count();
    let neg = signs.iter().filter(|s| **s == MinorSign::Neg).count();
    binary_entropy_counts(pos, neg)
}

pub fn binary_entropy_counts(pos: usize, neg: usize) -> Entropy {
    let total = pos + neg;
    if total == 0 {
        return Entropy::Undefined;
    }
    let mut h = 0.0;
    for c in [pos, neg] {
        if c > 0 {
            let q = c as f64 / total as f64;
            h -= q * q.log2();
        }
    }
    Entropy::Bits(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{grassmann::orthonormal_basis, thin_svd};
    use crate::rng::{gaussian_matrix, seeded};
    use crate::Vector;
    use proptest::prelude::*;
    use MinorSign::*;

    fn factors_from_u(u: Matrix) -> SvdFactors {
        let m = u.ncols();
        SvdFactors {
            v: Matrix::identity(m, m),
            s: Vector::from_element(m, 1.0),
            u,
        }
    }

    fn laplace_det(m: &Matrix) -> f64 {
        let n = m.nrows();
        if n == 1 {
            return m[(0, 0)];
        }
        let mut acc = 0.0;
        for j in 0..n {
            let sub = m.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * m[(0, j)] * laplace_det(&sub);
        }
        acc
    }

    #[test]
    fn identity_rows_and_swap() {
        let f = factors_from_u(Matrix::identity(4, 2));
        assert_eq!(minor_sign(&f, &[0, 1], 2).unwrap(), Pos);
        assert_eq!(minor_sign(&f, &[1, 0], 2).unwrap(), Neg);
    }

    #[test]
    fn matches_laplace_oracle() {
        let mut rng = seeded(11, 0);
        for _ in 0..50 {
            let g = gaussian_matrix(&mut rng, 9, 4);
            let u = orthonormal_basis(&g);
            let tuple = [6usize, 1, 4];
            let mut sub = Matrix::zeros(3, 3);
            for (r, &row) in tuple.iter().enumerate() {
                for c in 0..3 {
                    sub[(r, c)] = u[(row, c)];
                }
            }
            let f = factors_from_u(u);
            assert_eq!(
                minor_sign(&f, &tuple, 3).unwrap(),
                MinorSign::from_det(laplace_det(&sub))
            );
        }
    }

    #[test]
    fn rejects_bad_tuples() {
        let f = factors_from_u(Matrix::identity(4, 3));
        assert!(matches!(
            minor_sign(&f, &[0, 9], 2),
            Err(Error::OutOfRange { index: 9, .. })
        ));
        assert!(matches!(
            minor_sign(&f, &[2, 2], 2),
            Err(Error::DuplicateIndex(2))
        ));
        assert!(minor_sign(&f, &[0, 1], 3).is_err());
    }

    #[test]
    fn zero_minor_is_zero_sign() {
        let f = factors_from_u(Matrix::identity(4, 2));
        assert_eq!(minor_sign(&f, &[2, 3], 2).unwrap(), Zero);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(sign_entropy(&[Pos, Pos, Pos, Pos]), Entropy::Bits(0.0));
        assert_eq!(sign_entropy(&[Pos, Neg]), Entropy::Bits(1.0));
        let h = sign_entropy(&[Pos, Pos, Pos, Neg]).bits().unwrap();
        let oracle = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((h - oracle).abs() < 1e-15);
        assert!((h - 0.811278).abs() < 1e-6);
        assert_eq!(sign_entropy(&[Zero, Zero]), Entropy::Undefined);
        assert_eq!(sign_entropy(&[]), Entropy::Undefined);
        assert_eq!(sign_entropy(&[Zero, Pos, Zero, Neg]), Entropy::Bits(1.0));
    }

    #[test]
    fn some_tuple_is_order_sensitive() {
        let mut rng = seeded(5, 0);
        let x = gaussian_matrix(&mut rng, 6, 4);
        let f = thin_svd(&x).unwrap();
        let a = minor_sign(&f, &[0, 2, 3], 3).unwrap();
        let b = minor_sign(&f, &[2, 0, 3], 3).unwrap();
        assert_ne!(a, Zero);
        assert_eq!(a.flipped(), b);
    }

    proptest! {
        #[test]
        fn entropy_in_unit_interval(pos in 0usize..50, neg in 0usize..50, zero in 0usize..5) {
            let mut s = vec![Pos; pos];
            s.extend(vec![Neg; neg]);
            s.extend(vec![Zero; zero]);
            match sign_entropy(&s) {
                Entropy::Bits(h) => prop_assert!((0.0..=1.0).contains(&h)),
                Entropy::Undefined => prop_assert_eq!(pos + neg, 0),
            }
        }

        #[test]
        fn column_flips_scale_signs_uniformly(seed in 0u64..1000, mask in 0u32..16) {
            let mut rng = seeded(seed, 0);
            let x = gaussian_matrix(&mut rng, 8, 5);
            let f = thin_svd(&x).unwrap();
            let mut g = f.clone();
            let k = 3;
            let mut parity = 1;
            for c in 0..4 {
                if mask & (1 << c) != 0 {
                    g.u.column_mut(c).neg_mut();
                    if c < k {
                        parity = -parity;
                    }
                }
            }
            for t in [[0usize, 1, 2], [7, 3, 5], [2, 6, 4]] {
                let a = minor_sign(&f, &t, k).unwrap();
                let b = minor_sign(&g, &t, k).unwrap();
                prop_assert_eq!(if parity == 1 { a } else { a.flipped() }, b);
            }
        }
    }
}
