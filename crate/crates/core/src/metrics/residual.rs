// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::banks::ChangedEdgeSet;
use crate::geometry::{blade2, project_states, ProjectionMatrix};
use crate::{Error, Matrix, Result, Vector};

/// Normalized mean of per-row blade contrasts from projected
/// `(x_row, x_clean_col, x_corrupt_col)` triples. Rows whose blades or
/// contrast vanish are dropped; `None` if every row is dropped.
pub fn residual_blade_vector_projected(rows: &[(Vector, Vector, Vector)]) -> Result<Option<Vector>> {
    let mut acc: Option<Vector> = None;
    let mut kept = 0usize;
    for (xa, xc, xk) in rows {
        let bc = blade2(xa.as_slice(), xc.as_slice())?;
        let bk = blade2(xa.as_slice(), xk.as_slice())?;
        if !bc.normalized || !bk.normalized {
            continue;
        }
        let diff = bc.coeffs - bk.coeffs;
        let n = diff.norm();
        if n == 0.0 {
            continue;
        }
        let contrast = diff / n;
        kept += 1;
        acc = Some(match acc {
            Some(a) => a + contrast,
            None => contrast,
        });
    }
    Ok(acc.and_then(|sum| {
        let mean = sum / kept as f64;
        let n = mean.norm();
        (n > 0.0).then(|| mean / n)
    }))
}

/// Residual blade vector of one prompt's readout-layer states.
///
/// `row_tokens[a]` is the position of row `a`'s label and `col_tokens[a][b]`
/// the position of column label `b` inside row `a`'s listing.
pub fn residual_blade_vector(
    states: &Matrix,
    p: &ProjectionMatrix,
    changed: &ChangedEdgeSet,
    row_tokens: &[usize],
    col_tokens: &[Vec<usize>],
) -> Result<Option<Vector>> {
    if changed.entries.is_empty() {
        return Err(Error::InvalidArgument("changed edge set is empty".into()));
    }
    let n = states.nrows();
    let mut picks = Vec::with_capacity(changed.entries.len() * 3);
    for &(a, c, k) in &changed.entries {
        let ra = *row_tokens.get(a).ok_or(Error::OutOfRange { index: a, len: row_tokens.len() })?;
        let cols = col_tokens.get(a).ok_or(Error::OutOfRange { index: a, len: col_tokens.len() })?;
        for pos in [ra, *cols.get(c).ok_or(Error::OutOfRange { index: c, len: cols.len() })?,
                    *cols.get(k).ok_or(Error::OutOfRange { index: k, len: cols.len() })?] {
            if pos >= n {
                return Err(Error::OutOfRange { index: pos, len: n });
            }
            picks.push(pos);
        }
    }
    let sub = states.select_rows(picks.iter());
    let x = project_states(&sub, p)?;
    let rows: Vec<(Vector, Vector, Vector)> = (0..changed.entries.len())
        .map(|i| {
            (
                x.row(3 * i).transpose(),
                x.row(3 * i + 1).transpose(),
                x.row(3 * i + 2).transpose(),
            )
        })
        .collect();
    residual_blade_vector_projected(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn orthonormal_closed_form() {
        let out = residual_blade_vector_projected(&[(v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0]))])
            .unwrap()
            .unwrap();
        // e1^e2 - e1^e3 over (12, 13, 23), normalized.
        let h = 1.0 / 2f64.sqrt();
        assert!((out - v(&[h, -h, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn equal_columns_drop_the_row() {
        let a = v(&[1.0, 2.0, 0.5]);
        let c = v(&[0.0, 1.0, 3.0]);
        assert_eq!(residual_blade_vector_projected(&[(a.clone(), c.clone(), c.clone())]).unwrap(), None);
        let other = (v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0]));
        let both = residual_blade_vector_projected(&[(a, c.clone(), c), other.clone()]).unwrap();
        assert_eq!(both, residual_blade_vector_projected(&[other]).unwrap());
    }

    proptest! {
        #[test]
        fn output_is_unit(seed in 0u64..500, rows in 1usize..6) {
            let g = gaussian_matrix(&mut seeded(seed, 3), 3 * rows, 7);
            let triples: Vec<_> = (0..rows)
                .map(|i| (g.row(3*i).transpose(), g.row(3*i+1).transpose(), g.row(3*i+2).transpose()))
                .collect();
            let out = residual_blade_vector_projected(&triples).unwrap().unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-8);
            prop_assert_eq!(out.len(), 21);
        }
    }
}
